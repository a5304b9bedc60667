#include "sit/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "sit/errors.hpp"
#include "sit/ops.hpp"

namespace sit {

// ---------------------------------------------------------------- config

void ModelConfig::validate() const {
  if (layers_enc == 0 || layers_dec == 0) throw ConfigError("need at least one encoder and decoder layer");
  if (ffn_dim == 0) throw ConfigError("ffn_dim must be positive");
  attention().validate();
  if (cross_modes.empty()) throw ConfigError("cross_modes must name at least one cross-attention sublayer");
  if (!ep && !ea) throw ConfigError("encoder needs EP or EA");
  if (!dp && !da) throw ConfigError("decoder needs DP or DA");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

std::string ModelConfig::code() const {
  std::vector<std::string> parts;
  if (ep) parts.push_back("EP");
  if (dp) parts.push_back("DP");
  if (ea) parts.push_back("EA");
  if (da) parts.push_back("DA");
  for (CrossMode m : cross_modes) parts.push_back(m == CrossMode::per ? "CP" : "CA");
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "-" : "") + parts[i];
  return out;
}

std::vector<std::string> ModelConfig::keys() {
  return {"kind",  "layers_enc",  "layers_dec", "d_model",     "heads", "ffn_dim",
          "ep",    "ea",          "dp",         "da",          "cross_modes",
          "dropout", "cosine_head", "rope_base", "seed",        "fault_stream_offset"};
}

KeyValues ModelConfig::to_key_values() const {
  KeyValues kv;
  kv.set("kind", kind == ModelKind::standard ? "standard" : "symbol_invariant");
  kv.set("layers_enc", std::to_string(layers_enc));
  kv.set("layers_dec", std::to_string(layers_dec));
  kv.set("d_model", std::to_string(d_model));
  kv.set("heads", std::to_string(heads));
  kv.set("ffn_dim", std::to_string(ffn_dim));
  kv.set("ep", ep ? "1" : "0");
  kv.set("ea", ea ? "1" : "0");
  kv.set("dp", dp ? "1" : "0");
  kv.set("da", da ? "1" : "0");
  std::string modes;
  for (std::size_t i = 0; i < cross_modes.size(); ++i) {
    modes += (i ? "," : "") + std::string(cross_modes[i] == CrossMode::per ? "per" : "agg");
  }
  kv.set("cross_modes", modes);
  kv.set("dropout", format_double(dropout));
  kv.set("cosine_head", cosine_head ? "1" : "0");
  kv.set("rope_base", format_double(rope_base));
  kv.set("seed", std::to_string(seed));
  kv.set("fault_stream_offset", fault_stream_offset ? "1" : "0");
  return kv;
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) {
  kv.require_known(keys());
  ModelConfig c;
  const auto kind = kv.get_string("kind", "symbol_invariant");
  if (kind == "standard") {
    c.kind = ModelKind::standard;
  } else if (kind == "symbol_invariant") {
    c.kind = ModelKind::symbol_invariant;
  } else {
    throw ConfigError("unknown model kind '" + kind + "'");
  }
  c.layers_enc = kv.get_size("layers_enc", c.layers_enc);
  c.layers_dec = kv.get_size("layers_dec", c.layers_dec);
  c.d_model = kv.get_size("d_model", c.d_model);
  c.heads = kv.get_size("heads", c.heads);
  c.ffn_dim = kv.get_size("ffn_dim", c.ffn_dim);
  c.ep = kv.get_bool("ep", c.ep);
  c.ea = kv.get_bool("ea", c.ea);
  c.dp = kv.get_bool("dp", c.dp);
  c.da = kv.get_bool("da", c.da);
  if (kv.has("cross_modes")) {
    c.cross_modes.clear();
    std::istringstream in(kv.get_string("cross_modes", ""));
    std::string item;
    while (std::getline(in, item, ',')) {
      if (item == "per") {
        c.cross_modes.push_back(CrossMode::per);
      } else if (item == "agg") {
        c.cross_modes.push_back(CrossMode::agg);
      } else {
        throw ConfigError("unknown cross mode '" + item + "'");
      }
    }
  }
  c.dropout = kv.get_double("dropout", c.dropout);
  c.cosine_head = kv.get_bool("cosine_head", c.cosine_head);
  c.rope_base = kv.get_double("rope_base", c.rope_base);
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<std::int64_t>(c.seed)));
  c.fault_stream_offset = kv.get_bool("fault_stream_offset", c.fault_stream_offset);
  c.validate();
  return c;
}

// ---------------------------------------------------------------- layers

LayerNormParams LayerNormParams::create(ParameterSet& params, const std::string& prefix,
                                        std::size_t d) {
  return {params.add_constant(prefix + ".gain", {d}, 1.0),
          params.add_constant(prefix + ".bias", {d}, 0.0)};
}

FeedForward FeedForward::create(ParameterSet& params, const std::string& prefix, std::size_t d,
                                std::size_t hidden, std::mt19937_64& rng) {
  FeedForward f;
  f.w1 = params.add_uniform(prefix + ".w1", {d, hidden}, rng);
  f.b1 = params.add_constant(prefix + ".b1", {hidden}, 0.0);
  f.w2 = params.add_uniform(prefix + ".w2", {hidden, d}, rng);
  f.b2 = params.add_constant(prefix + ".b2", {d}, 0.0);
  return f;
}

namespace {

class Residual {
 public:
  Residual(const StreamLayout& layout, const Regularizer& reg) : reg_(reg) {
    active_ = layout.active_rows();
    all_active_ = std::all_of(active_.begin(), active_.end(), [](std::uint8_t a) { return a != 0; });
  }

  Tensor operator()(const Tensor& x, const Tensor& sub, const LayerNormParams& norm) const {
    Tensor s = reg_.rate > 0.0 && reg_.rng != nullptr ? ops::dropout(sub, reg_.rate, *reg_.rng) : sub;
    Tensor y = ops::layer_norm(ops::add(x, s), norm.gain, norm.bias);
    return all_active_ ? y : ops::select_rows(y, x, active_);
  }

 private:
  Regularizer reg_;
  std::vector<std::uint8_t> active_;
  bool all_active_ = true;
};

Tensor feed_forward(const FeedForward& f, const Tensor& x) {
  return ops::linear(ops::relu(ops::linear(x, f.w1, f.b1)), f.w2, f.b2);
}

}  // namespace

StreamBatch encoder_layer(const EncoderLayer& layer, const AttentionConfig& cfg,
                          const StreamBatch& h, const BatchMasks& masks, const Regularizer& reg) {
  const Residual residual(*h.layout, reg);
  Tensor x = h.hidden;
  if (layer.ep) {
    x = residual(x, per_stream_attention(*layer.ep, cfg, {x, h.layout}, masks), *layer.ep_norm);
  }
  if (layer.ea) {
    x = residual(x, aggregated_attention(*layer.ea, cfg, {x, h.layout}, masks), *layer.ea_norm);
  }
  x = residual(x, feed_forward(layer.ffn, x), layer.ffn_norm);
  return {x, h.layout};
}

StreamBatch decoder_layer(const DecoderLayer& layer, const AttentionConfig& cfg,
                          const std::vector<CrossMode>& modes, const StreamBatch& h,
                          const StreamBatch& enc, std::span<const std::size_t> enc_index,
                          const BatchMasks& look_ahead, const BatchMasks& padding,
                          const Regularizer& reg) {
  if (modes.size() != layer.cross.size()) throw ConfigError("decoder layer: one cross sublayer per mode");
  const Residual residual(*h.layout, reg);
  Tensor x = h.hidden;
  if (layer.dp) {
    x = residual(x, per_stream_attention(*layer.dp, cfg, {x, h.layout}, look_ahead), *layer.dp_norm);
  }
  if (layer.da) {
    x = residual(x, aggregated_attention(*layer.da, cfg, {x, h.layout}, look_ahead), *layer.da_norm);
  }
  for (std::size_t j = 0; j < modes.size(); ++j) {
    x = residual(x,
                 cross_attention(layer.cross[j], cfg, {x, h.layout}, enc, enc_index, modes[j], padding),
                 layer.cross_norm[j]);
  }
  x = residual(x, feed_forward(layer.ffn, x), layer.ffn_norm);
  return {x, h.layout};
}

AdaCosState AdaCosState::initial(std::size_t classes) {
  if (classes < 3) throw ConfigError("AdaCos needs at least three classes");
  return {std::sqrt(2.0) * std::log(static_cast<double>(classes) - 1.0), classes};
}

// ---------------------------------------------------------------- model

Seq2SeqModel::Seq2SeqModel(ModelConfig config, Vocabulary vocab)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  const std::size_t d = config_.d_model;
  const std::size_t rows =
      config_.kind == ModelKind::standard ? vocab_.size() : vocab_.embedding_rows();
  embedding_ = params_.add_uniform("embedding", {rows, d}, rng, 1.0 / std::sqrt(static_cast<double>(d)));

  for (std::size_t i = 0; i < config_.layers_enc; ++i) {
    const std::string p = "enc." + std::to_string(i);
    EncoderLayer layer;
    if (config_.ep) {
      layer.ep = MultiHeadAttention::create(params_, p + ".ep", d, rng);
      layer.ep_norm = LayerNormParams::create(params_, p + ".ep_norm", d);
    }
    if (config_.ea) {
      layer.ea = MultiHeadAttention::create(params_, p + ".ea", d, rng);
      layer.ea_norm = LayerNormParams::create(params_, p + ".ea_norm", d);
    }
    layer.ffn = FeedForward::create(params_, p + ".ffn", d, config_.ffn_dim, rng);
    layer.ffn_norm = LayerNormParams::create(params_, p + ".ffn_norm", d);
    encoder_.push_back(std::move(layer));
  }
  for (std::size_t i = 0; i < config_.layers_dec; ++i) {
    const std::string p = "dec." + std::to_string(i);
    DecoderLayer layer;
    if (config_.dp) {
      layer.dp = MultiHeadAttention::create(params_, p + ".dp", d, rng);
      layer.dp_norm = LayerNormParams::create(params_, p + ".dp_norm", d);
    }
    if (config_.da) {
      layer.da = MultiHeadAttention::create(params_, p + ".da", d, rng);
      layer.da_norm = LayerNormParams::create(params_, p + ".da_norm", d);
    }
    for (std::size_t j = 0; j < config_.cross_modes.size(); ++j) {
      const std::string c = p + ".cross" + std::to_string(j) +
                            (config_.cross_modes[j] == CrossMode::per ? "_per" : "_agg");
      layer.cross.push_back(MultiHeadAttention::create(params_, c, d, rng));
      layer.cross_norm.push_back(LayerNormParams::create(params_, c + "_norm", d));
    }
    layer.ffn = FeedForward::create(params_, p + ".ffn", d, config_.ffn_dim, rng);
    layer.ffn_norm = LayerNormParams::create(params_, p + ".ffn_norm", d);
    decoder_.push_back(std::move(layer));
  }
  adacos_ = AdaCosState::initial(vocab_.size());
  dropout_rng_.seed(config_.seed ^ 0x9e3779b97f4a7c15ULL);
}

Regularizer Seq2SeqModel::regularizer() const {
  if (!training_ || config_.dropout <= 0.0) return {};
  return {config_.dropout, &dropout_rng_};
}

StreamBatch Seq2SeqModel::embed(std::span<const Sequence> seqs,
                                std::shared_ptr<const StreamLayout> layout) const {
  if (config_.kind == ModelKind::standard) {
    std::vector<std::size_t> ids(layout->rows(), static_cast<std::size_t>(kPad));
    for (std::size_t b = 0; b < seqs.size(); ++b) {
      for (std::size_t l = 0; l < seqs[b].size(); ++l) {
        vocab_.check(seqs[b][l]);
        ids[layout->row(b, 0, l)] = static_cast<std::size_t>(seqs[b][l]);
      }
    }
    return {ops::gather_rows(embedding_, ids), std::move(layout)};
  }
  return embed_streams(vocab_, seqs, layout, embedding_);
}

StreamBatch Seq2SeqModel::encode(std::span<const Sequence> sources) const {
  auto layout = std::make_shared<const StreamLayout>(
      config_.kind == ModelKind::standard ? single_stream_layout(vocab_, sources)
                                          : source_layout(vocab_, sources));
  StreamBatch h = embed(sources, layout);
  const auto masks = self_masks(*layout, false);
  const auto cfg = config_.attention();
  const auto reg = regularizer();
  for (const auto& layer : encoder_) h = encoder_layer(layer, cfg, h, masks, reg);
  return h;
}

StreamBatch Seq2SeqModel::decode_states(const StreamBatch& encoded,
                                        std::span<const Sequence> decoder_inputs,
                                        std::span<const std::size_t> enc_index) const {
  auto layout = std::make_shared<const StreamLayout>(
      config_.kind == ModelKind::standard
          ? single_stream_layout(vocab_, decoder_inputs)
          : target_layout(vocab_, decoder_inputs, *encoded.layout, enc_index));
  StreamBatch h = embed(decoder_inputs, layout);
  const auto look_ahead = self_masks(*layout, true);
  const auto padding = cross_masks(*layout, *encoded.layout, enc_index);
  const auto cfg = config_.attention();
  const auto reg = regularizer();
  for (const auto& layer : decoder_) {
    h = decoder_layer(layer, cfg, config_.cross_modes, h, encoded, enc_index, look_ahead, padding, reg);
  }
  return h;
}

Logits Seq2SeqModel::logits(const StreamBatch& states) const {
  if (config_.kind == ModelKind::symbol_invariant) {
    Logits out = project(states, embedding_, vocab_, config_.cosine_head);
    if (config_.fault_stream_offset) {
      const std::size_t base = vocab_.base_size();
      std::vector<double> offset(out.values.size(), 0.0);
      for (std::size_t r = 0; r < out.values.rows(); ++r)
        for (std::size_t c = base; c < out.values.cols(); ++c)
          offset[r * out.values.cols() + c] = 0.5 * static_cast<double>(c - base);
      out.values = ops::add(out.values, Tensor(out.values.shape(), std::move(offset)));
    }
    return out;
  }
  const StreamLayout& layout = *states.layout;
  Tensor features = config_.cosine_head ? ops::row_normalize(states.hidden) : states.hidden;
  Tensor weights = config_.cosine_head ? ops::row_normalize(embedding_) : embedding_;
  Logits out;
  out.values = ops::matmul_nt(features, weights);
  out.batch = layout.batch;
  out.length = layout.length;
  std::vector<TokenId> all(vocab_.size());
  for (std::size_t t = 0; t < all.size(); ++t) all[t] = static_cast<TokenId>(t);
  out.column_tokens.assign(layout.batch, all);
  return out;
}

Logits Seq2SeqModel::forward(std::span<const Sequence> sources,
                             std::span<const Sequence> decoder_inputs) const {
  if (sources.size() != decoder_inputs.size()) throw ContractError("forward: one decoder input per source");
  std::vector<std::size_t> index(sources.size());
  for (std::size_t i = 0; i < index.size(); ++i) index[i] = i;
  return logits(decode_states(encode(sources), decoder_inputs, index));
}

Logits Seq2SeqModel::forward(const Sequence& source, const Sequence& decoder_input) const {
  return forward(std::span<const Sequence>(&source, 1), std::span<const Sequence>(&decoder_input, 1));
}

namespace {

struct Candidate {
  TokenId token;
  double logit;
  double log_prob;
};

// Scaled log-softmax over one step's candidates, best first (ties to the
// lower token id).
std::vector<Candidate> rank_candidates(const StepScores& step, double scale) {
  if (step.tokens.empty() || step.tokens.size() != step.logits.size()) {
    throw ContractError("decode: step produced no candidates");
  }
  std::vector<Candidate> out;
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < step.tokens.size(); ++c) {
    out.push_back({step.tokens[c], step.logits[c], 0.0});
    mx = std::max(mx, scale * step.logits[c]);
  }
  double total = 0.0;
  for (const auto& c : out) total += std::exp(scale * c.logit - mx);
  const double lse = mx + std::log(total);
  for (auto& c : out) c.log_prob = scale * c.logit - lse;
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    if (a.logit != b.logit) return a.logit > b.logit;
    return a.token < b.token;
  });
  return out;
}

constexpr double kNearTie = 1e-12;

bool near_tie(const std::vector<Candidate>& ranked) {
  return ranked.size() > 1 && ranked[0].logit - ranked[1].logit <= kNearTie;
}

Sequence with_sos(const Sequence& tokens) {
  Sequence dec = {kSos};
  dec.insert(dec.end(), tokens.begin(), tokens.end());
  return dec;
}

}  // namespace

DecodeResult greedy_search(const StepFunction& step, double scale, std::size_t max_len) {
  DecodeResult r;
  while (true) {
    const Sequence dec = with_sos(r.tokens);
    const auto scores = step(std::span<const Sequence>(&dec, 1));
    const auto ranked = rank_candidates(scores.at(0), scale);
    r.near_tie = r.near_tie || near_tie(ranked);
    const Candidate& best = ranked.front();
    r.score += best.log_prob;
    if (best.token == kEos) {
      r.finished = true;
      break;
    }
    if (r.tokens.size() == max_len) {
      r.truncated = true;
      break;
    }
    r.tokens.push_back(best.token);
  }
  return r;
}

std::vector<DecodeResult> beam_search(const StepFunction& step, double scale, std::size_t width,
                                      std::size_t max_len) {
  if (width == 0) throw ContractError("beam width must be at least 1");
  auto better = [](const DecodeResult& a, const DecodeResult& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.tokens != b.tokens) return a.tokens < b.tokens;
    return a.finished && !b.finished;
  };
  std::vector<DecodeResult> beams(1);
  while (true) {
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < beams.size(); ++i) {
      if (!beams[i].finished && !beams[i].truncated) open.push_back(i);
    }
    if (open.empty()) break;
    std::vector<Sequence> inputs;
    for (std::size_t i : open) inputs.push_back(with_sos(beams[i].tokens));
    const auto scores = step(inputs);
    std::vector<DecodeResult> pool;
    for (const auto& b : beams) {
      if (b.finished || b.truncated) pool.push_back(b);
    }
    for (std::size_t j = 0; j < open.size(); ++j) {
      const DecodeResult& parent = beams[open[j]];
      const auto ranked = rank_candidates(scores.at(j), scale);
      const bool tie = near_tie(ranked);
      // At the length bound only the best continuation is scored, as in
      // greedy search.
      const bool at_bound = parent.tokens.size() == max_len;
      const std::size_t keep = at_bound ? 1 : std::min(width, ranked.size());
      for (std::size_t c = 0; c < keep; ++c) {
        DecodeResult next = parent;
        next.score += ranked[c].log_prob;
        next.near_tie = parent.near_tie || tie;
        if (ranked[c].token == kEos) {
          next.finished = true;
        } else if (at_bound) {
          next.truncated = true;
        } else {
          next.tokens.push_back(ranked[c].token);
        }
        pool.push_back(std::move(next));
      }
    }
    std::stable_sort(pool.begin(), pool.end(), better);
    if (pool.size() > width) pool.resize(width);
    beams = std::move(pool);
  }
  return beams;
}

StepFunction Seq2SeqModel::step_function(const Sequence& source) const {
  StreamBatch enc;
  {
    NoGradGuard no_grad;
    enc = encode(std::span<const Sequence>(&source, 1));
  }
  return [this, enc](std::span<const Sequence> prefixes) {
    NoGradGuard no_grad;
    const std::vector<std::size_t> index(prefixes.size(), 0);
    const Logits lg = logits(decode_states(enc, prefixes, index));
    std::vector<StepScores> out(prefixes.size());
    const std::size_t width = lg.values.cols();
    for (std::size_t b = 0; b < prefixes.size(); ++b) {
      const double* z = lg.values.data().data() + lg.row(b, prefixes[b].size() - 1) * width;
      const auto& cols = lg.column_tokens[b];
      for (std::size_t c = 0; c < cols.size(); ++c) {
        if (cols[c] == kNoToken || cols[c] == kPad || cols[c] == kSos) continue;
        out[b].tokens.push_back(cols[c]);
        out[b].logits.push_back(z[c]);
      }
    }
    return out;
  };
}

DecodeResult Seq2SeqModel::decode_greedy(const Sequence& source, std::size_t max_len) const {
  return greedy_search(step_function(source), adacos_.scale, max_len);
}

std::vector<DecodeResult> Seq2SeqModel::decode_beam(const Sequence& source, std::size_t width,
                                                    std::size_t max_len) const {
  return beam_search(step_function(source), adacos_.scale, width, max_len);
}

// ---------------------------------------------------------------- invariance

InvarianceReport check_invariance(const Seq2SeqModel& model, const Sequence& source,
                                  const AlphaRenaming& f, std::size_t max_len) {
  InvarianceReport report;
  const auto original = model.decode_greedy(source, max_len);
  const Sequence renamed_source = apply_renaming(f, source);
  const auto renamed = model.decode_greedy(renamed_source, max_len);
  report.original = original.tokens;
  report.renamed_back = apply_renaming(f.inverse(), renamed.tokens);
  report.decode_equal = report.original == report.renamed_back &&
                        original.finished == renamed.finished;
  report.near_tie = original.near_tie || renamed.near_tie;

  NoGradGuard no_grad;
  Sequence dec = {kSos};
  dec.insert(dec.end(), original.tokens.begin(), original.tokens.end());
  const Logits a = model.forward(source, dec);
  const Logits b = model.forward(renamed_source, apply_renaming(f, dec));
  if (a.valid_columns(0) != b.valid_columns(0) || a.length != b.length) {
    report.max_logit_discrepancy = std::numeric_limits<double>::infinity();
    return report;
  }
  double worst = 0.0;
  for (std::size_t c = 0; c < a.valid_columns(0); ++c) {
    const TokenId t = a.column_tokens[0][c];
    const std::size_t cb = b.column_of(0, t == kNoToken ? kNoToken : f.apply(t));
    if (cb == Logits::npos) {
      worst = std::numeric_limits<double>::infinity();
      break;
    }
    for (std::size_t l = 0; l < a.length; ++l) {
      worst = std::max(worst, std::abs(a.values.at(a.row(0, l), c) - b.values.at(b.row(0, l), cb)));
    }
  }
  report.max_logit_discrepancy = worst;
  return report;
}

// ---------------------------------------------------------------- checkpoint

namespace {
constexpr std::string_view kCheckpointHeader = "sit-checkpoint 1";
}

std::string serialize_checkpoint(const Seq2SeqModel& model) {
  std::ostringstream out;
  out << kCheckpointHeader << '\n';
  out << "[config]\n";
  out << model.config().to_key_values().serialize();
  out << model.vocab().serialize();
  out << "[adacos]\n";
  out << "scale=" << format_double(model.adacos().scale) << '\n';
  out << "classes=" << model.adacos().classes << '\n';
  out << "[params]\n";
  for (const auto& p : model.parameters().all()) {
    out << p.name << ' ' << p.tensor.rank();
    for (std::size_t e : p.tensor.shape()) out << ' ' << e;
    out << '\n';
    const auto data = p.tensor.data();
    for (std::size_t i = 0; i < data.size(); ++i) out << (i ? " " : "") << format_double(data[i]);
    out << '\n';
  }
  return out.str();
}

Seq2SeqModel parse_checkpoint(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointHeader) {
    throw ParseError("not a checkpoint (expected header '" + std::string(kCheckpointHeader) + "')", 0);
  }
  std::string section;
  std::string config_text, vocab_text, adacos_text;
  std::vector<std::pair<std::string, std::string>> params;  // header, values
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.front() == '[') {
      section = line;
      if (section == "[base]" || section == "[interchangeable]") vocab_text += line + '\n';
      continue;
    }
    if (section == "[config]") {
      config_text += line + '\n';
    } else if (section == "[base]" || section == "[interchangeable]") {
      vocab_text += line + '\n';
    } else if (section == "[adacos]") {
      adacos_text += line + '\n';
    } else if (section == "[params]") {
      std::string values;
      if (!std::getline(in, values)) throw ParseError("parameter without values", line_no);
      ++line_no;
      params.emplace_back(line, values);
    } else {
      throw ParseError("content outside a known section", line_no);
    }
  }
  Seq2SeqModel model(ModelConfig::from_key_values(KeyValues::parse(config_text)),
                     Vocabulary::parse(vocab_text));
  const auto adacos = KeyValues::parse(adacos_text);
  model.adacos().scale = adacos.get_double("scale", model.adacos().scale);
  model.adacos().classes = adacos.get_size("classes", model.adacos().classes);

  const auto& all = model.parameters().all();
  if (params.size() != all.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(params.size()) + " parameters, model expects " +
                      std::to_string(all.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::istringstream head(params[i].first);
    std::string name;
    std::size_t rank = 0;
    head >> name >> rank;
    Shape shape(rank);
    for (auto& e : shape) head >> e;
    const Parameter& p = all[i];
    if (name != p.name || shape != p.tensor.shape()) {
      throw ConfigError("checkpoint parameter '" + name + "' " + shape_string(shape) +
                        " does not match model parameter '" + p.name + "' " +
                        shape_string(p.tensor.shape()));
    }
    std::istringstream vals(params[i].second);
    auto data = const_cast<Tensor&>(p.tensor).data();
    std::string tok;
    for (double& x : data) {
      if (!(vals >> tok)) throw ParseError("too few values for '" + name + "'", 0);
      x = std::strtod(tok.c_str(), nullptr);
    }
    if (vals >> tok) throw ParseError("too many values for '" + name + "'", 0);
  }
  return model;
}

void save_checkpoint(const Seq2SeqModel& model, const std::filesystem::path& path) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write checkpoint '" + path.string() + "'");
    out << serialize_checkpoint(model);
    if (!out) throw ConfigError("failed writing checkpoint '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Seq2SeqModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

}  // namespace sit
