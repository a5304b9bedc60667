#include "sit/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "sit/errors.hpp"
#include "sit/simd/kernels.hpp"

namespace sit {

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
}

std::vector<std::string> TrainConfig::keys() {
  return {"batch_size", "steps", "learning_rate", "warmup", "beta1", "beta2",
          "epsilon",    "seed",  "adacos",        "checkpoint_every", "log_every"};
}

KeyValues TrainConfig::to_key_values() const {
  KeyValues kv;
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("steps", std::to_string(steps));
  kv.set("learning_rate", format_double(learning_rate));
  kv.set("warmup", std::to_string(warmup));
  kv.set("beta1", format_double(beta1));
  kv.set("beta2", format_double(beta2));
  kv.set("epsilon", format_double(epsilon));
  kv.set("seed", std::to_string(seed));
  kv.set("adacos", adacos ? "1" : "0");
  kv.set("checkpoint_every", std::to_string(checkpoint_every));
  kv.set("log_every", std::to_string(log_every));
  return kv;
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
  kv.require_known(keys());
  TrainConfig c;
  c.batch_size = kv.get_size("batch_size", c.batch_size);
  c.steps = kv.get_size("steps", c.steps);
  c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
  c.warmup = kv.get_size("warmup", c.warmup);
  c.beta1 = kv.get_double("beta1", c.beta1);
  c.beta2 = kv.get_double("beta2", c.beta2);
  c.epsilon = kv.get_double("epsilon", c.epsilon);
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<std::int64_t>(c.seed)));
  c.adacos = kv.get_bool("adacos", c.adacos);
  c.checkpoint_every = kv.get_size("checkpoint_every", c.checkpoint_every);
  c.log_every = kv.get_size("log_every", c.log_every);
  c.validate();
  return c;
}

Batch Batch::from_pairs(std::span<const SequencePair> pairs) {
  Batch b;
  for (const auto& p : pairs) {
    b.sources.push_back(p.source);
    Sequence dec = {kSos};
    dec.insert(dec.end(), p.target.begin(), p.target.end());
    b.decoder_inputs.push_back(std::move(dec));
    Sequence lab = p.target;
    lab.push_back(kEos);
    b.labels.push_back(std::move(lab));
  }
  return b;
}

// ---------------------------------------------------------------- loss

namespace {

struct Position {
  std::size_t row;
  std::size_t columns;
  std::size_t target;
};

std::vector<Position> labelled_positions(const Logits& lg, std::span<const Sequence> labels) {
  if (labels.size() != lg.batch) throw ContractError("loss: one label sequence per batch entry");
  std::vector<Position> out;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b].size() > lg.length) throw ContractError("loss: labels longer than the logits");
    for (std::size_t l = 0; l < labels[b].size(); ++l) {
      if (labels[b][l] == kPad) continue;
      const std::size_t col = lg.column_of(b, labels[b][l]);
      if (col == Logits::npos) {
        throw ContractError("loss: label " + std::to_string(labels[b][l]) + " has no logit column");
      }
      out.push_back({lg.row(b, l), lg.valid_columns(b), col});
    }
  }
  if (out.empty()) throw ContractError("loss: no labelled (non-PAD) positions");
  return out;
}

double log_sum_exp(const double* z, std::size_t n, double scale) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < n; ++c) mx = std::max(mx, scale * z[c]);
  std::vector<double> terms(n);
  for (std::size_t c = 0; c < n; ++c) terms[c] = std::exp(scale * z[c] - mx);
  return mx + std::log(simd::pairwise_sum(terms));
}

}  // namespace

Tensor sequence_loss(const Logits& lg, std::span<const Sequence> labels, double scale) {
  const auto positions = labelled_positions(lg, labels);
  const std::size_t width = lg.values.cols();
  const auto z = lg.values.data();
  std::vector<double> per(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto& p = positions[i];
    const double* row = z.data() + p.row * width;
    per[i] = log_sum_exp(row, p.columns, scale) - scale * row[p.target];
  }
  const double n = static_cast<double>(positions.size());
  const double mean = simd::pairwise_sum(per) / n;
  const Tensor values = lg.values;
  return Tensor::from_op(Shape{}, {mean}, {values}, [values, positions, scale, n, width](const Tensor& r) {
    const double g = r.grad()[0] / n;
    const auto z = values.data();
    auto dst = values.grad_buffer();
    for (const auto& p : positions) {
      const double* row = z.data() + p.row * width;
      const double lse = log_sum_exp(row, p.columns, scale);
      double* d = dst.data() + p.row * width;
      for (std::size_t c = 0; c < p.columns; ++c) {
        d[c] += g * scale * (std::exp(scale * row[c] - lse) - (c == p.target ? 1.0 : 0.0));
      }
    }
  });
}

AdaCosState adacos_update(const AdaCosState& state, const Logits& lg, std::span<const Sequence> labels) {
  const auto positions = labelled_positions(lg, labels);
  const std::size_t width = lg.values.cols();
  const auto z = lg.values.data();
  std::vector<double> b_terms, angles;
  for (const auto& p : positions) {
    const double* row = z.data() + p.row * width;
    std::vector<double> terms;
    for (std::size_t c = 0; c < p.columns; ++c) {
      if (c != p.target) terms.push_back(std::exp(state.scale * row[c]));
    }
    b_terms.push_back(simd::pairwise_sum(terms));
    angles.push_back(std::acos(std::clamp(row[p.target], -1.0, 1.0)));
  }
  const double b_avg = simd::pairwise_sum(b_terms) / static_cast<double>(b_terms.size());
  std::sort(angles.begin(), angles.end());
  const std::size_t m = angles.size() / 2;
  const double median = angles.size() % 2 ? angles[m] : 0.5 * (angles[m - 1] + angles[m]);
  const double s = std::log(b_avg) / std::cos(std::min(std::numbers::pi / 4.0, median));
  AdaCosState next = state;
  if (std::isfinite(s) && s > 0.0) next.scale = s;
  return next;
}

// ---------------------------------------------------------------- Adam

Adam::Adam(const ParameterSet& params, const TrainConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  for (const auto& p : params.all()) {
    if (!p.trainable) continue;
    params_.push_back(p);
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

double Adam::rate_at(std::size_t step) const {
  if (cfg_.warmup == 0) return cfg_.learning_rate;
  return cfg_.learning_rate * std::min(1.0, static_cast<double>(step) / static_cast<double>(cfg_.warmup));
}

double Adam::step() {
  ++t_;
  const double lr = rate_at(t_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto g = params_[i].tensor.grad();
    if (g.empty()) continue;
    auto w = params_[i].tensor.data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.epsilon);
    }
  }
  return lr;
}

// ---------------------------------------------------------------- steps

Tensor batch_loss(const Seq2SeqModel& model, const Batch& batch, double scale) {
  return sequence_loss(model.forward(batch.sources, batch.decoder_inputs), batch.labels, scale);
}

namespace {

class TrainingMode {
 public:
  TrainingMode(Seq2SeqModel& m, bool on) : m_(m), was_(m.training()) { m_.set_training(on); }
  ~TrainingMode() { m_.set_training(was_); }
  TrainingMode(const TrainingMode&) = delete;
  TrainingMode& operator=(const TrainingMode&) = delete;

 private:
  Seq2SeqModel& m_;
  bool was_;
};

}  // namespace

StepMetrics train_step(Seq2SeqModel& model, const Batch& batch, Adam& optimizer, const TrainConfig& cfg) {
  const TrainingMode mode(model, true);
  const Logits lg = model.forward(batch.sources, batch.decoder_inputs);
  AdaCosState next = model.adacos();
  if (cfg.adacos && model.config().cosine_head) next = adacos_update(next, lg, batch.labels);

  const Tensor loss = sequence_loss(lg, batch.labels, next.scale);
  StepMetrics out;
  out.loss = loss.item();
  out.scale = next.scale;
  if (!std::isfinite(out.loss)) {
    std::ostringstream msg;
    msg << "non-finite loss " << out.loss << " at optimizer step " << optimizer.steps_taken() + 1
        << " (scale " << next.scale << ", batch of " << batch.size() << ")";
    throw NumericalError(msg.str());
  }
  model.parameters().zero_grad();
  loss.backward();
  std::vector<double> squares;
  for (const auto& p : model.parameters().all()) {
    for (double g : p.tensor.grad()) squares.push_back(g * g);
  }
  out.grad_norm = std::sqrt(simd::pairwise_sum(squares));
  if (!std::isfinite(out.grad_norm)) {
    model.parameters().zero_grad();
    throw NumericalError("non-finite gradient norm at optimizer step " +
                         std::to_string(optimizer.steps_taken() + 1));
  }
  model.adacos() = next;
  optimizer.step();
  model.parameters().zero_grad();
  return out;
}

std::string format_log_line(std::size_t step, const StepMetrics& m, double wall_ms) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "step=%zu loss=%.6f s=%.6f grad_norm=%.6f wall_ms=%.1f", step, m.loss,
                m.scale, m.grad_norm, wall_ms);
  return buf;
}

FitResult fit(Seq2SeqModel& model, std::span<const SequencePair> dataset, const TrainConfig& cfg,
              const std::filesystem::path& checkpoint, std::ostream* log) {
  cfg.validate();
  FitResult result;
  if (dataset.empty() || cfg.steps == 0) return result;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  auto next_index = [&] {
    if (cursor == order.size()) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
      cursor = 0;
    }
    return order[cursor++];
  };

  Adam optimizer(model.parameters(), cfg);
  const auto start = std::chrono::steady_clock::now();
  std::vector<SequencePair> pairs;
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    pairs.clear();
    for (std::size_t i = 0; i < cfg.batch_size; ++i) pairs.push_back(dataset[next_index()]);
    const auto metrics = train_step(model, Batch::from_pairs(pairs), optimizer, cfg);
    result.history.push_back(metrics);
    result.steps = step;
    if (log != nullptr && cfg.log_every > 0 && (step % cfg.log_every == 0 || step == cfg.steps)) {
      const double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      *log << format_log_line(step, metrics, ms) << std::endl;
    }
    if (!checkpoint.empty() && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 &&
        step != cfg.steps) {
      auto path = checkpoint;
      path += ".step" + std::to_string(step);
      save_checkpoint(model, path);
      result.checkpoints.push_back(path);
    }
  }
  if (!checkpoint.empty()) {
    save_checkpoint(model, checkpoint);
    result.checkpoints.push_back(checkpoint);
  }
  return result;
}

// ---------------------------------------------------------------- gradient check

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& g : groups) m = std::max(m, g.max_rel_error);
  return m;
}

GradCheckReport gradient_check(std::span<const Parameter> params, const std::function<Tensor()>& loss,
                               double h, double floor) {
  GradCheckReport report;
  if (params.empty()) return report;
  for (const auto& p : params) Tensor(p.tensor).zero_grad();
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) {
    const auto g = p.tensor.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(p.tensor.size(), 0.0);
    Tensor(p.tensor).zero_grad();
  }
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < params.size(); ++i) {
    GroupError group{params[i].name, params[i].tensor.size(), 0.0};
    Tensor handle = params[i].tensor;
    auto data = handle.data();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double keep = data[j];
      data[j] = keep + h;
      const double up = loss().item();
      data[j] = keep - h;
      const double down = loss().item();
      data[j] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i][j];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      group.max_rel_error = std::max(group.max_rel_error, err);
    }
    report.groups.push_back(std::move(group));
  }
  return report;
}

GradCheckReport gradient_check(Seq2SeqModel& model, const Batch& batch, double h, double floor) {
  const TrainingMode mode(model, false);
  const double scale = model.adacos().scale;
  std::vector<Parameter> trainable;
  for (const auto& p : model.parameters().all()) {
    if (p.trainable) trainable.push_back(p);
  }
  return gradient_check(trainable, [&] { return batch_loss(model, batch, scale); }, h, floor);
}

}  // namespace sit
