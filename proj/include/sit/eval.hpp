#pragma once

// Evaluation: semantic accuracy, top-N accuracy, alpha-covariance, heatmap
// grids, invariance certification and timing against stream count.

#include <cstdint>
#include <map>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "sit/logic/datasets.hpp"
#include "sit/model.hpp"

namespace sit {

// Maps a source to ranked candidate outputs (best first, at most `width`).
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual const Vocabulary& vocab() const = 0;
  virtual std::vector<Sequence> predict(const Sequence& source, std::size_t width,
                                        std::size_t max_len) const = 0;
};

// Greedy decoding for width 1, beam search otherwise.
class ModelPredictor : public Predictor {
 public:
  explicit ModelPredictor(const Seq2SeqModel& model) : model_(model) {}
  const Vocabulary& vocab() const override { return model_.vocab(); }
  std::vector<Sequence> predict(const Sequence& source, std::size_t width,
                                std::size_t max_len) const override;

 private:
  const Seq2SeqModel& model_;
};

struct EvalOptions {
  std::size_t beam_width = 1;
  // Output budget per sample: target length plus this slack.
  std::size_t length_slack = 8;
};

struct EvalReport {
  std::size_t n = 0;
  std::size_t correct = 0;
  std::size_t exact = 0;
  // Samples whose prediction matched the target token for token but failed
  // the checker; nonzero only for a dataset that does not validate itself.
  std::size_t exact_not_correct = 0;
  double correct_rate() const { return n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0; }
  double exact_rate() const { return n ? static_cast<double>(exact) / static_cast<double>(n) : 0.0; }
};

// Correct: the task checker accepts the best candidate. Exact: its tokens
// equal the encoded target.
EvalReport eval_correct(const Predictor& p, const logic::Dataset& d, const EvalOptions& opt = {});

// Fraction of samples with at least one checker-accepted candidate among
// the n best.
double topn_accuracy(const Predictor& p, const logic::Dataset& d, std::size_t n,
                     std::size_t length_slack = 8);

// Distinct interchangeable tokens of a sequence, in first-appearance order.
std::vector<TokenId> interchangeable_tokens_of(const Vocabulary& vocab, const Sequence& s);

struct RenamingSet {
  std::vector<AlphaRenaming> renamings;
  // True when the set is a seeded sample rather than every injective map of
  // the used tokens.
  bool sampled = false;
};

// All P(V_i, k) renamings of the k used tokens when k <= 4 and V_i <= 6,
// otherwise `sample_size` distinct ones drawn without replacement. Unused
// ids fill the remaining slots in ascending order.
RenamingSet renaming_set(const Vocabulary& vocab, const Sequence& source, std::uint64_t seed,
                         std::size_t sample_size = 24);

struct AlphaCovSample {
  std::size_t index = 0;
  std::size_t ap_count = 0;
  std::size_t distinct = 0;  // |U|
  std::size_t total = 0;     // |P|
  double value = 0.0;
  bool sampled = false;
};

// 1 - (|U| - 1) / (|P| - 1) where P holds, for each renaming a, the greedy
// prediction on a(x) mapped back through a^-1, and U its distinct members
// (token-exact). Throws ContractError when |P| < 2.
AlphaCovSample alpha_covariance(const Predictor& p, const Sequence& source,
                                std::span<const AlphaRenaming> renamings, std::size_t max_len);

struct AlphaCovReport {
  std::vector<AlphaCovSample> samples;
  std::map<std::size_t, double> mean_by_ap_count() const;
  double min_value() const;
};

// One entry per dataset sample; each renaming set is seeded by seed + index.
AlphaCovReport alpha_covariance_report(const Predictor& p, const logic::Dataset& d, std::uint64_t seed,
                                       std::size_t length_slack = 8);
void write_alpha_cov(const AlphaCovReport& r, std::ostream& out);

struct GridSpec {
  logic::Task task = logic::Task::prop;
  std::vector<std::size_t> ap_counts;
  std::vector<std::size_t> lengths;  // formula size in symbols
  std::size_t per_cell = 20;
  std::uint64_t seed = 0;
  std::size_t beam_width = 1;
};

struct HeatmapCell {
  std::size_t aps = 0;
  std::size_t length = 0;
  std::size_t n = 0;
  std::size_t correct = 0;
  std::size_t exact = 0;
};

struct HeatmapGrid {
  std::vector<HeatmapCell> cells;  // ap-major order
  // Header `ap,len,n,correct,exact` then one row per cell.
  std::string csv() const;
};

// Each cell draws up to per_cell formulas of exactly that size and AP count;
// cells nothing can be generated for report n = 0.
HeatmapGrid heatmap(const Predictor& p, const GridSpec& spec);

struct CertifyReport {
  std::size_t trials = 0;
  std::map<std::string, std::size_t> trials_by_task;
  std::size_t decode_unequal = 0;
  std::size_t near_ties = 0;
  double max_logit_discrepancy = 0.0;
  double tolerance = 1e-6;
  bool passed() const { return trials > 0 && decode_unequal == 0 && max_logit_discrepancy <= tolerance; }
};

// Random inputs of the three tasks in rotation with random renamings of the
// model vocabulary; see check_invariance.
CertifyReport certify_invariance(const Seq2SeqModel& model, std::size_t trials, std::uint64_t seed,
                                 std::size_t max_len = 16);

struct TimingPoint {
  std::size_t streams = 0;
  double mean_ms = 0.0;
};

struct TimingReport {
  std::vector<TimingPoint> points;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

// Least-squares line through (x, y) with its coefficient of determination.
void linear_fit(std::span<const double> x, std::span<const double> y, double& slope, double& intercept,
                double& r2);

// Mean wall time of one teacher-forced forward pass on inputs of `length`
// tokens using exactly S distinct interchangeable tokens, per S.
TimingReport time_scaling(const Seq2SeqModel& model, std::span<const std::size_t> stream_counts,
                          std::size_t samples_per_point, std::size_t length, std::uint64_t seed);

}  // namespace sit
