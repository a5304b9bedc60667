#pragma once

// Encoder/decoder stacks over parallel interchangeable-token streams, the
// tied cosine projection head, and greedy/beam decoding.

#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sit/attention.hpp"
#include "sit/config_file.hpp"
#include "sit/parameters.hpp"
#include "sit/streams.hpp"
#include "sit/vocabulary.hpp"

namespace sit {

enum class ModelKind {
  symbol_invariant,
  // Plain transformer: one embedding row per token, a single stream, logits
  // over the whole vocabulary. Used as the comparison baseline.
  standard,
};

struct ModelConfig {
  ModelKind kind = ModelKind::symbol_invariant;
  std::size_t layers_enc = 2;
  std::size_t layers_dec = 2;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t ffn_dim = 128;
  bool ep = true;
  bool ea = true;
  bool dp = true;
  bool da = true;
  std::vector<CrossMode> cross_modes = {CrossMode::per};
  double dropout = 0.0;
  bool cosine_head = true;
  double rope_base = 10000.0;
  std::uint64_t seed = 0;
  // Self-test fault: stream s gets its own output bias 0.5*s, so streams no
  // longer share one function.
  bool fault_stream_offset = false;

  // Throws ConfigError.
  void validate() const;
  AttentionConfig attention() const { return {heads, d_model, rope_base}; }
  // Component code such as "EP-DP-EA-DA-CP".
  std::string code() const;

  KeyValues to_key_values() const;
  // Keys absent from `kv` keep their defaults; unknown keys are rejected.
  static ModelConfig from_key_values(const KeyValues& kv);
  static std::vector<std::string> keys();
};

struct LayerNormParams {
  Tensor gain, bias;
  static LayerNormParams create(ParameterSet& params, const std::string& prefix, std::size_t d);
};

struct FeedForward {
  Tensor w1, b1, w2, b2;
  static FeedForward create(ParameterSet& params, const std::string& prefix, std::size_t d,
                            std::size_t hidden, std::mt19937_64& rng);
};

struct EncoderLayer {
  std::optional<MultiHeadAttention> ep, ea;
  std::optional<LayerNormParams> ep_norm, ea_norm;
  FeedForward ffn;
  LayerNormParams ffn_norm;
};

struct DecoderLayer {
  std::optional<MultiHeadAttention> dp, da;
  std::optional<LayerNormParams> dp_norm, da_norm;
  std::vector<MultiHeadAttention> cross;
  std::vector<LayerNormParams> cross_norm;
  FeedForward ffn;
  LayerNormParams ffn_norm;
};

// Dropout source for the sublayers; rate 0 (or no engine) disables it.
struct Regularizer {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;
};

// Each enabled sublayer: H = Norm(H + Dropout(Sublayer(H))) on rows of active
// streams; inactive rows are carried through unchanged.
StreamBatch encoder_layer(const EncoderLayer& layer, const AttentionConfig& cfg,
                          const StreamBatch& h, const BatchMasks& masks,
                          const Regularizer& reg = {});

StreamBatch decoder_layer(const DecoderLayer& layer, const AttentionConfig& cfg,
                          const std::vector<CrossMode>& modes, const StreamBatch& h,
                          const StreamBatch& enc, std::span<const std::size_t> enc_index,
                          const BatchMasks& look_ahead, const BatchMasks& padding,
                          const Regularizer& reg = {});

struct AdaCosState {
  double scale = 1.0;
  std::size_t classes = 2;

  // s0 = sqrt(2) * ln(C - 1). Throws ConfigError for C < 3.
  static AdaCosState initial(std::size_t classes);
};

struct DecodeResult {
  Sequence tokens;  // without SOS and EOS
  double score = 0.0;
  bool finished = false;
  bool truncated = false;
  // Some step's top two candidates were within 1e-12 of each other.
  bool near_tie = false;
};

// Next-token logits of one decoder prefix over the tokens it may emit.
struct StepScores {
  std::vector<TokenId> tokens;
  std::vector<double> logits;
};
// Scores a batch of decoder prefixes (each starting with SOS).
using StepFunction = std::function<std::vector<StepScores>(std::span<const Sequence> prefixes)>;

// Argmax search until EOS or max_len tokens; log-probabilities come from
// softmax(scale * logits) over the candidates. Ties go to the lowest id.
DecodeResult greedy_search(const StepFunction& step, double scale, std::size_t max_len);
// Keeps the `width` best hypotheses by summed log-probability (ties broken
// by token sequence); finished hypotheses stay in the pool.
std::vector<DecodeResult> beam_search(const StepFunction& step, double scale, std::size_t width,
                                      std::size_t max_len);

class Seq2SeqModel {
 public:
  Seq2SeqModel(ModelConfig config, Vocabulary vocab);

  const ModelConfig& config() const noexcept { return config_; }
  const Vocabulary& vocab() const noexcept { return vocab_; }
  const ParameterSet& parameters() const noexcept { return params_; }
  ParameterSet& parameters() noexcept { return params_; }
  const Tensor& embedding() const noexcept { return embedding_; }
  const std::vector<EncoderLayer>& encoder_layers() const noexcept { return encoder_; }
  const std::vector<DecoderLayer>& decoder_layers() const noexcept { return decoder_; }

  // The three uses of the tied table (encoder input, decoder input, output
  // projection) read this same tensor.
  const Tensor& encoder_embedding() const noexcept { return embedding_; }
  const Tensor& decoder_embedding() const noexcept { return embedding_; }
  const Tensor& projection_weights() const noexcept { return embedding_; }

  AdaCosState& adacos() noexcept { return adacos_; }
  const AdaCosState& adacos() const noexcept { return adacos_; }

  // Enables dropout (if configured) during forward passes.
  void set_training(bool training) { training_ = training; }
  bool training() const noexcept { return training_; }

  StreamBatch encode(std::span<const Sequence> sources) const;
  // Decoder states for decoder inputs (starting with SOS); sequence b reads
  // encoded source enc_index[b].
  StreamBatch decode_states(const StreamBatch& encoded, std::span<const Sequence> decoder_inputs,
                            std::span<const std::size_t> enc_index) const;
  Logits logits(const StreamBatch& decoder_states) const;

  // Next-token logits for every decoder input position.
  Logits forward(std::span<const Sequence> sources, std::span<const Sequence> decoder_inputs) const;
  Logits forward(const Sequence& source, const Sequence& decoder_input) const;

  // Argmax decoding until EOS or max_len output tokens. PAD, SOS and the
  // synthetic-stream column are never emitted; ties go to the lowest token id.
  DecodeResult decode_greedy(const Sequence& source, std::size_t max_len) const;
  // Hypotheses ranked by summed log-probability of the scaled logits.
  std::vector<DecodeResult> decode_beam(const Sequence& source, std::size_t width,
                                        std::size_t max_len) const;
  // Step function over the emittable columns for one encoded source.
  StepFunction step_function(const Sequence& source) const;

 private:
  StreamBatch embed(std::span<const Sequence> seqs, std::shared_ptr<const StreamLayout> layout) const;
  Regularizer regularizer() const;

  ModelConfig config_;
  Vocabulary vocab_;
  ParameterSet params_;
  Tensor embedding_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  AdaCosState adacos_;
  bool training_ = false;
  mutable std::mt19937_64 dropout_rng_;
};

struct InvarianceReport {
  double max_logit_discrepancy = 0.0;
  bool decode_equal = true;
  bool near_tie = false;
  Sequence original;      // decode(x)
  Sequence renamed_back;  // f^-1(decode(f(x)))
};

// Compares the model on x and on f(x): logits over the decoder input
// SOS + decode(x) (columns matched through f), and the decoded outputs.
InvarianceReport check_invariance(const Seq2SeqModel& model, const Sequence& source,
                                  const AlphaRenaming& f, std::size_t max_len);

// Text checkpoint: header line, config, vocabulary, AdaCos state, then every
// parameter with its shape and values.
void save_checkpoint(const Seq2SeqModel& model, const std::filesystem::path& path);
Seq2SeqModel load_checkpoint(const std::filesystem::path& path);
std::string serialize_checkpoint(const Seq2SeqModel& model);
Seq2SeqModel parse_checkpoint(std::string_view text);

}  // namespace sit
