#pragma once

// Teacher-forced training: scaled cross-entropy over the projection logits,
// AdaCos scale updates, an Adam optimizer with linear warmup, and a
// finite-difference gradient check.

#include <chrono>
#include <filesystem>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sit/config_file.hpp"
#include "sit/model.hpp"

namespace sit {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t steps = 1000;
  double learning_rate = 1e-3;
  std::size_t warmup = 500;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  // Update the AdaCos scale each step (cosine head only).
  bool adacos = true;
  // 0 disables periodic checkpoints; the final one is always written when a
  // path is given.
  std::size_t checkpoint_every = 0;
  // 0 disables the metric log.
  std::size_t log_every = 50;

  void validate() const;
  KeyValues to_key_values() const;
  static TrainConfig from_key_values(const KeyValues& kv);
  static std::vector<std::string> keys();
};

// Teacher forcing: decoder input SOS + target, labels target + EOS.
struct Batch {
  std::vector<Sequence> sources;
  std::vector<Sequence> decoder_inputs;
  // Same length as the matching decoder input; PAD labels are ignored.
  std::vector<Sequence> labels;

  static Batch from_pairs(std::span<const SequencePair> pairs);
  std::size_t size() const noexcept { return sources.size(); }
};

// Mean over non-PAD label positions (pooled across the batch) of
// cross-entropy against softmax(scale * logits) over each sequence's valid
// columns. Throws ContractError when no position is labelled or a label has
// no column.
Tensor sequence_loss(const Logits& logits, std::span<const Sequence> labels, double scale);

// One AdaCos update from pooled labelled positions:
// s = ln(B_avg) / cos(min(pi/4, theta_med)), B_avg the mean summed
// exponential of the non-target scaled logits at the current s and theta_med
// the median target angle. Degenerate results keep the previous scale.
AdaCosState adacos_update(const AdaCosState& state, const Logits& logits,
                          std::span<const Sequence> labels);

class Adam {
 public:
  Adam(const ParameterSet& params, const TrainConfig& cfg);

  // Applies one update from the accumulated gradients; returns the learning
  // rate used.
  double step();
  std::size_t steps_taken() const noexcept { return t_; }
  // Linear warmup to the base rate over cfg.warmup steps.
  double rate_at(std::size_t step) const;

 private:
  std::vector<Parameter> params_;
  TrainConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

struct StepMetrics {
  double loss = 0.0;
  double grad_norm = 0.0;
  double scale = 0.0;
};

// Loss of the model on a batch at a fixed scale, with the graph attached.
Tensor batch_loss(const Seq2SeqModel& model, const Batch& batch, double scale);

// Forward, AdaCos update, loss, backward and optimizer step. Throws
// NumericalError (model untouched by the update) on a non-finite loss or
// gradient.
StepMetrics train_step(Seq2SeqModel& model, const Batch& batch, Adam& optimizer,
                       const TrainConfig& cfg);

struct FitResult {
  std::size_t steps = 0;
  std::vector<StepMetrics> history;
  std::vector<std::filesystem::path> checkpoints;
};

// Log line: "step=<n> loss=<x> s=<x> grad_norm=<x> wall_ms=<x>".
std::string format_log_line(std::size_t step, const StepMetrics& m, double wall_ms);

// Trains for cfg.steps steps over seeded reshuffles of the dataset. An empty
// dataset returns immediately without writing anything.
FitResult fit(Seq2SeqModel& model, std::span<const SequencePair> dataset, const TrainConfig& cfg,
              const std::filesystem::path& checkpoint = {}, std::ostream* log = nullptr);

struct GroupError {
  std::string name;
  std::size_t count = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GroupError> groups;
  double max_rel_error() const;
};

// |a - n| / max(|a|, |n|, floor) between backward() and central differences,
// per parameter.
GradCheckReport gradient_check(std::span<const Parameter> params, const std::function<Tensor()>& loss,
                               double h = 1e-4, double floor = 1e-6);
// Model loss on a batch at the current AdaCos scale, dropout off.
GradCheckReport gradient_check(Seq2SeqModel& model, const Batch& batch, double h = 1e-4,
                               double floor = 1e-6);

}  // namespace sit
