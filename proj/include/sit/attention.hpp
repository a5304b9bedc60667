#pragma once

// Multi-head attention with rotary position embedding, and the stream-level
// sublayers built on it: per-stream self-attention, attention to the
// aggregated view, and per-stream or aggregated cross-attention.

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sit/parameters.hpp"
#include "sit/streams.hpp"
#include "sit/tensor.hpp"

namespace sit {

struct AttentionConfig {
  std::size_t heads = 4;
  std::size_t d_model = 64;
  double rope_base = 10000.0;

  std::size_t head_dim() const { return d_model / heads; }
  // Throws ConfigError unless d_model divides into heads of even width.
  void validate() const;
};

// Which keys each query may attend to; 1 = allowed.
struct AttentionMask {
  enum class Kind { padding, causal_padding };

  Kind kind = Kind::padding;
  std::size_t query_len = 0;
  std::size_t key_len = 0;
  std::vector<std::uint8_t> bits;

  static AttentionMask padding(std::size_t query_len, std::size_t key_len, std::size_t valid_keys);
  // Lower-triangular intersected with key padding.
  static AttentionMask causal(std::size_t len, std::size_t valid);

  bool allows(std::size_t q, std::size_t k) const { return bits[q * key_len + k] != 0; }
};

// Maps groups of query rows onto groups of key/value rows. Query group g
// covers rows [g*query_len, (g+1)*query_len) and reads key/value group
// kv_group[g] under masks[mask_index[g]]. Inactive query groups produce zero
// output.
struct AttentionPlan {
  std::size_t query_groups = 0;
  std::size_t query_len = 0;
  std::size_t kv_groups = 0;
  std::size_t kv_len = 0;
  std::vector<std::size_t> kv_group;
  std::vector<std::size_t> mask_index;
  std::vector<std::uint8_t> query_active;
  std::shared_ptr<const std::vector<AttentionMask>> masks;

  void validate() const;
};

// Rotates each head's consecutive pairs (2j, 2j+1) by
// position * base^(-2j/head_dim). Rows of x are positions.
Tensor rope(const Tensor& x, std::span<const std::size_t> positions, std::size_t head_dim,
            double base);

// Scaled dot-product attention per head with scale 1/sqrt(head_dim) on
// already-projected q, k, v. When `weights` is non-null it receives the
// attention probabilities laid out [query_group][head][query][key].
Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                      const AttentionPlan& plan, std::vector<double>* weights = nullptr);

struct MultiHeadAttention {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;

  static MultiHeadAttention create(ParameterSet& params, const std::string& prefix,
                                   std::size_t d_model, std::mt19937_64& rng);
};

// Projects, applies rope to queries and keys with their own positions,
// attends and applies the output projection.
Tensor mha(const MultiHeadAttention& p, const AttentionConfig& cfg, const Tensor& query_in,
           const Tensor& kv_in, const AttentionPlan& plan, std::vector<double>* weights = nullptr);

struct AttentionOutput {
  Tensor output;
  std::vector<double> weights;  // [head][query][key]
};

// Single-sequence form: q rows attend to k/v rows (k and v share positions).
AttentionOutput mha(const MultiHeadAttention& p, const AttentionConfig& cfg, const Tensor& q,
                    const Tensor& k, const Tensor& v, const AttentionMask& mask);

// One mask per sequence of the batch.
using BatchMasks = std::shared_ptr<const std::vector<AttentionMask>>;

BatchMasks self_masks(const StreamLayout& layout, bool causal);
BatchMasks cross_masks(const StreamLayout& query, const StreamLayout& keys,
                       std::span<const std::size_t> key_index);

// MHA output for every active stream attending to itself. Rows of inactive
// streams hold only the output bias and never read their own inputs.
Tensor per_stream_attention(const MultiHeadAttention& p, const AttentionConfig& cfg,
                            const StreamBatch& h, const BatchMasks& masks);

// Queries from each stream, keys/values from aggregate(h) shared by all
// streams of a sequence.
Tensor aggregated_attention(const MultiHeadAttention& p, const AttentionConfig& cfg,
                            const StreamBatch& h, const BatchMasks& masks);

enum class CrossMode { per, agg };

// Decoder sequence b reads encoder sequence enc_index[b]. In per mode
// decoder stream s reads encoder stream s and the stream ids must agree
// (ContractError otherwise); in agg mode every stream reads the aggregated
// encoder view.
Tensor cross_attention(const MultiHeadAttention& p, const AttentionConfig& cfg,
                       const StreamBatch& dec, const StreamBatch& enc,
                       std::span<const std::size_t> enc_index, CrossMode mode,
                       const BatchMasks& masks);

// Plans used by the stream sublayers, exposed for inspection in tests.
AttentionPlan per_stream_plan(const StreamLayout& layout, const BatchMasks& masks);
AttentionPlan aggregated_plan(const StreamLayout& layout, const BatchMasks& masks);

}  // namespace sit
