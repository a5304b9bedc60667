#include "sit/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "sit/errors.hpp"

namespace sit {

std::vector<Sequence> ModelPredictor::predict(const Sequence& source, std::size_t width,
                                              std::size_t max_len) const {
  if (width == 0) throw ContractError("predict: beam width must be positive");
  if (width == 1) return {model_.decode_greedy(source, max_len).tokens};
  std::vector<Sequence> out;
  for (auto& r : model_.decode_beam(source, width, max_len)) out.push_back(std::move(r.tokens));
  return out;
}

// ---------------------------------------------------------------- accuracy

EvalReport eval_correct(const Predictor& p, const logic::Dataset& d, const EvalOptions& opt) {
  EvalReport r;
  for (const auto& s : d.samples) {
    const Sequence source = p.vocab().encode(s.input);
    const Sequence target = p.vocab().encode(s.target);
    const auto candidates = p.predict(source, opt.beam_width, target.size() + opt.length_slack);
    const Sequence best = candidates.empty() ? Sequence{} : candidates.front();
    const bool exact = best == target;
    const bool correct = logic::check_sample(d.task, s.input, p.vocab().decode(best));
    ++r.n;
    r.exact += exact;
    r.correct += correct;
    r.exact_not_correct += exact && !correct;
  }
  return r;
}

double topn_accuracy(const Predictor& p, const logic::Dataset& d, std::size_t n, std::size_t length_slack) {
  if (n == 0) throw ContractError("topn_accuracy: N must be positive");
  if (d.samples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : d.samples) {
    const Sequence source = p.vocab().encode(s.input);
    const std::size_t max_len = p.vocab().encode(s.target).size() + length_slack;
    for (const auto& c : p.predict(source, n, max_len)) {
      if (logic::check_sample(d.task, s.input, p.vocab().decode(c))) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(d.samples.size());
}

// ---------------------------------------------------------------- alpha-covariance

std::vector<TokenId> interchangeable_tokens_of(const Vocabulary& vocab, const Sequence& s) {
  std::vector<TokenId> out;
  for (TokenId t : s) {
    if (vocab.is_interchangeable(t) && std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
  }
  return out;
}

namespace {

// Renaming sending used[i] to targets[i]; the other ids take the unused
// targets in ascending order.
AlphaRenaming extend(const Vocabulary& vocab, const std::vector<std::size_t>& used,
                     const std::vector<std::size_t>& targets) {
  const std::size_t n = vocab.interchangeable_size();
  std::vector<std::size_t> image(n, n);
  std::vector<char> taken(n, 0);
  for (std::size_t i = 0; i < used.size(); ++i) {
    image[used[i]] = targets[i];
    taken[targets[i]] = 1;
  }
  std::size_t next = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (image[j] != n) continue;
    while (taken[next]) ++next;
    image[j] = next;
    taken[next] = 1;
  }
  return AlphaRenaming(vocab.base_size(), std::move(image));
}

double permutations(std::size_t n, std::size_t k) {
  double p = 1.0;
  for (std::size_t i = 0; i < k; ++i) p *= static_cast<double>(n - i);
  return p;
}

}  // namespace

RenamingSet renaming_set(const Vocabulary& vocab, const Sequence& source, std::uint64_t seed,
                         std::size_t sample_size) {
  std::vector<std::size_t> used;
  for (TokenId t : interchangeable_tokens_of(vocab, source)) used.push_back(static_cast<std::size_t>(t) - vocab.base_size());
  const std::size_t n = vocab.interchangeable_size(), k = used.size();
  RenamingSet out;
  const double total = permutations(n, k);
  if ((k <= 4 && n <= 6) || total <= static_cast<double>(sample_size)) {
    // Injective maps in lexicographic order of their target tuples.
    std::vector<std::size_t> targets;
    std::vector<char> taken(n, 0);
    auto rec = [&](auto&& self) -> void {
      if (targets.size() == k) {
        out.renamings.push_back(extend(vocab, used, targets));
        return;
      }
      for (std::size_t j = 0; j < n; ++j) {
        if (taken[j]) continue;
        taken[j] = 1;
        targets.push_back(j);
        self(self);
        targets.pop_back();
        taken[j] = 0;
      }
    };
    rec(rec);
    return out;
  }
  // The identity first, then distinct random maps of the used tokens.
  out.sampled = true;
  std::mt19937_64 rng(seed);
  std::set<std::vector<std::size_t>> seen{used};
  out.renamings.push_back(AlphaRenaming::identity(vocab));
  while (out.renamings.size() < sample_size) {
    std::vector<std::size_t> pool(n);
    for (std::size_t j = 0; j < n; ++j) pool[j] = j;
    std::vector<std::size_t> targets;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t pick = i + uniform_index(rng, n - i);
      std::swap(pool[i], pool[pick]);
      targets.push_back(pool[i]);
    }
    if (seen.insert(targets).second) out.renamings.push_back(extend(vocab, used, targets));
  }
  return out;
}

AlphaCovSample alpha_covariance(const Predictor& p, const Sequence& source,
                                std::span<const AlphaRenaming> renamings, std::size_t max_len) {
  if (renamings.size() < 2) throw ContractError("alpha_covariance needs at least two renamings");
  std::set<Sequence> distinct;
  for (const auto& a : renamings) {
    const auto pred = p.predict(apply_renaming(a, source), 1, max_len);
    distinct.insert(apply_renaming(a.inverse(), pred.empty() ? Sequence{} : pred.front()));
  }
  AlphaCovSample s;
  s.ap_count = interchangeable_tokens_of(p.vocab(), source).size();
  s.distinct = distinct.size();
  s.total = renamings.size();
  s.value = 1.0 - static_cast<double>(s.distinct - 1) / static_cast<double>(s.total - 1);
  return s;
}

std::map<std::size_t, double> AlphaCovReport::mean_by_ap_count() const {
  std::map<std::size_t, std::pair<double, std::size_t>> acc;
  for (const auto& s : samples) {
    acc[s.ap_count].first += s.value;
    ++acc[s.ap_count].second;
  }
  std::map<std::size_t, double> out;
  for (const auto& [k, v] : acc) out[k] = v.first / static_cast<double>(v.second);
  return out;
}

double AlphaCovReport::min_value() const {
  double m = 1.0;
  for (const auto& s : samples) m = std::min(m, s.value);
  return m;
}

AlphaCovReport alpha_covariance_report(const Predictor& p, const logic::Dataset& d, std::uint64_t seed,
                                       std::size_t length_slack) {
  AlphaCovReport r;
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    const Sequence source = p.vocab().encode(d.samples[i].input);
    const auto set = renaming_set(p.vocab(), source, seed + i);
    if (set.renamings.size() < 2) continue;  // nothing to rename
    const std::size_t max_len = p.vocab().encode(d.samples[i].target).size() + length_slack;
    auto s = alpha_covariance(p, source, set.renamings, max_len);
    s.index = i;
    s.sampled = set.sampled;
    r.samples.push_back(s);
  }
  return r;
}

void write_alpha_cov(const AlphaCovReport& r, std::ostream& out) {
  out << "index,aps,distinct,total,value,sampled\n";
  for (const auto& s : r.samples) {
    out << s.index << ',' << s.ap_count << ',' << s.distinct << ',' << s.total << ','
        << format_double(s.value) << ',' << (s.sampled ? 1 : 0) << '\n';
  }
}

// ---------------------------------------------------------------- heatmap

std::string HeatmapGrid::csv() const {
  std::ostringstream out;
  out << "ap,len,n,correct,exact\n";
  for (const auto& c : cells) out << c.aps << ',' << c.length << ',' << c.n << ',' << c.correct << ',' << c.exact << '\n';
  return out.str();
}

HeatmapGrid heatmap(const Predictor& p, const GridSpec& spec) {
  if (spec.task == logic::Task::copying) throw ConfigError("heatmap grids cover the prop and ltl tasks");
  HeatmapGrid grid;
  for (std::size_t aps : spec.ap_counts) {
    for (std::size_t len : spec.lengths) {
      HeatmapCell cell{aps, len};
      if (len > 0 && aps > 0 && aps <= p.vocab().interchangeable_size()) {
        auto fs = spec.task == logic::Task::prop ? logic::FormulaSpec::prop(aps, {len, len})
                                                 : logic::FormulaSpec::ltl(aps, {len, len});
        fs.exact_aps = true;
        const std::uint64_t cell_seed = spec.seed ^ (aps * 0x9E3779B97F4A7C15ull) ^ (len * 0xC2B2AE3D27D4EB4Full);
        const auto data = spec.task == logic::Task::prop ? logic::gen_prop(cell_seed, fs, spec.per_cell)
                                                         : logic::gen_ltl(cell_seed, fs, spec.per_cell);
        const auto r = eval_correct(p, data.data, {spec.beam_width, 8});
        cell.n = r.n;
        cell.correct = r.correct;
        cell.exact = r.exact;
      }
      grid.cells.push_back(cell);
    }
  }
  return grid;
}

// ---------------------------------------------------------------- certification

CertifyReport certify_invariance(const Seq2SeqModel& model, std::size_t trials, std::uint64_t seed,
                                 std::size_t max_len) {
  const Vocabulary& vocab = model.vocab();
  if (vocab.interchangeable_size() == 0) throw ConfigError("certify: vocabulary has no interchangeable tokens");
  std::mt19937_64 rng(seed);
  CertifyReport r;
  const std::size_t aps = std::min<std::size_t>(5, vocab.interchangeable_size());
  for (std::size_t t = 0; t < trials; ++t) {
    const auto task = static_cast<logic::Task>(t % 3);
    std::string input;
    if (task == logic::Task::copying) {
      const std::size_t len = 5 + uniform_index(rng, 11);
      for (std::size_t i = 0; i < len; ++i) {
        input += vocab.surface(static_cast<TokenId>(vocab.base_size() + uniform_index(rng, vocab.interchangeable_size())));
      }
    } else {
      const auto fs = task == logic::Task::prop ? logic::FormulaSpec::prop(aps, {3, 12})
                                                : logic::FormulaSpec::ltl(aps, {3, 12});
      input = logic::unparse(*logic::random_formula(fs, rng));
    }
    const Sequence source = vocab.encode(input);
    const auto f = AlphaRenaming::random(vocab, rng);
    const auto rep = check_invariance(model, source, f, max_len);
    ++r.trials;
    ++r.trials_by_task[logic::task_name(task)];
    r.decode_unequal += !rep.decode_equal;
    r.near_ties += rep.near_tie;
    r.max_logit_discrepancy = std::max(r.max_logit_discrepancy, rep.max_logit_discrepancy);
  }
  return r;
}

// ---------------------------------------------------------------- timing

void linear_fit(std::span<const double> x, std::span<const double> y, double& slope, double& intercept,
                double& r2) {
  if (x.size() != y.size() || x.size() < 2) throw ContractError("linear_fit needs at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw ContractError("linear_fit: x values are all equal");
  slope = sxy / sxx;
  intercept = my - slope * mx;
  double ss_res = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (intercept + slope * x[i]);
    ss_res += e * e;
  }
  r2 = syy == 0.0 ? 1.0 : 1.0 - ss_res / syy;
}

TimingReport time_scaling(const Seq2SeqModel& model, std::span<const std::size_t> stream_counts,
                          std::size_t samples_per_point, std::size_t length, std::uint64_t seed) {
  const Vocabulary& vocab = model.vocab();
  if (samples_per_point == 0) throw ContractError("time_scaling: need at least one sample per point");
  std::mt19937_64 rng(seed);
  NoGradGuard no_grad;
  TimingReport r;
  for (std::size_t s : stream_counts) {
    if (s == 0 || s > vocab.interchangeable_size() || s > length) {
      throw ConfigError("time_scaling: " + std::to_string(s) + " streams do not fit the vocabulary and length");
    }
    std::vector<Sequence> inputs;
    for (std::size_t i = 0; i < samples_per_point; ++i) {
      Sequence seq;
      for (std::size_t j = 0; j < length; ++j) {
        seq.push_back(static_cast<TokenId>(vocab.base_size() + (j < s ? j : uniform_index(rng, s))));
      }
      for (std::size_t j = seq.size(); j > 1; --j) std::swap(seq[j - 1], seq[uniform_index(rng, j)]);
      inputs.push_back(std::move(seq));
    }
    // One untimed pass warms caches and allocator pools.
    {
      Sequence dec{kSos};
      dec.insert(dec.end(), inputs[0].begin(), inputs[0].end());
      model.forward(inputs[0], dec);
    }
    double total_ms = 0.0;
    for (const auto& src : inputs) {
      Sequence dec{kSos};
      dec.insert(dec.end(), src.begin(), src.end());
      const auto t0 = std::chrono::steady_clock::now();
      model.forward(src, dec);
      total_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    r.points.push_back({s, total_ms / static_cast<double>(samples_per_point)});
  }
  if (r.points.size() >= 2) {
    std::vector<double> x, y;
    for (const auto& p : r.points) {
      x.push_back(static_cast<double>(p.streams));
      y.push_back(p.mean_ms);
    }
    linear_fit(x, y, r.slope, r.intercept, r.r2);
  }
  return r;
}

}  // namespace sit
