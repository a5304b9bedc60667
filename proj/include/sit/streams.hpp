#pragma once

// Parallel interchangeable-token streams.
//
// A batch of B sequences with up to S streams each and L positions is held as
// one [B*S*L, d] tensor; row (b, s, l) lives at ((b*S)+s)*L + l. Sequence b
// owns streams [0, active_count(b)); the rest are inactive padding that never
// feeds back into active rows.

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "sit/tensor.hpp"
#include "sit/vocabulary.hpp"

namespace sit {

inline constexpr TokenId kNoToken = -1;

struct StreamLayout {
  std::size_t batch = 0;
  std::size_t streams = 0;
  std::size_t length = 0;
  // Ascending interchangeable ids per sequence. Empty means a single
  // synthetic stream that stands for no token.
  std::vector<std::vector<TokenId>> stream_ids;
  std::vector<std::size_t> lengths;
  // [batch][streams][length]; 1 where the position holds that stream's token.
  std::vector<std::uint8_t> occupancy;

  std::size_t active_count(std::size_t b) const {
    return stream_ids[b].empty() ? 1 : stream_ids[b].size();
  }
  bool active(std::size_t b, std::size_t s) const { return s < active_count(b); }
  std::size_t rows() const { return batch * streams * length; }
  std::size_t row(std::size_t b, std::size_t s, std::size_t l) const {
    return (b * streams + s) * length + l;
  }
  bool occupied(std::size_t b, std::size_t s, std::size_t l) const {
    return occupancy[row(b, s, l)] != 0;
  }
  // 1 for every row of an active stream.
  std::vector<std::uint8_t> active_rows() const;
};

// Layout of source sequences: one stream per distinct interchangeable id.
// Throws VocabularyError for ids outside the vocabulary.
StreamLayout source_layout(const Vocabulary& vocab, std::span<const Sequence> sources);

// Layout of decoder inputs reusing the streams of source sequence
// source_index[b]. Throws ContractError when a target holds an
// interchangeable id without a stream.
StreamLayout target_layout(const Vocabulary& vocab, std::span<const Sequence> targets,
                           const StreamLayout& source, std::span<const std::size_t> source_index);

// One stream per sequence with no occupancy (standard transformer layout).
StreamLayout single_stream_layout(const Vocabulary& vocab, std::span<const Sequence> sequences);

struct StreamBatch {
  Tensor hidden;
  std::shared_ptr<const StreamLayout> layout;

  std::size_t width() const { return hidden.cols(); }
};

// Embedding-table rows looked up for every (b, s, l) row: a stream's own
// token maps to the actual row, other interchangeable tokens to the
// placeholder row, base tokens to themselves. Padding positions use PAD.
std::vector<std::size_t> stream_lookup_rows(const Vocabulary& vocab, std::span<const Sequence> seqs,
                                            const StreamLayout& layout);

StreamBatch embed_streams(const Vocabulary& vocab, std::span<const Sequence> seqs,
                          std::shared_ptr<const StreamLayout> layout, const Tensor& table);
// Single sequence convenience form.
StreamBatch embed_streams(const Vocabulary& vocab, const Sequence& x, const Tensor& table);

// Mean over active streams, then each occupied position restored from the
// stream that owns it. Output is [batch*length, d]. Throws ContractError if
// a sequence has no active stream.
Tensor aggregate(const StreamBatch& h);

struct Logits {
  // [batch*length, base_size + streams]
  Tensor values;
  std::size_t batch = 0;
  std::size_t length = 0;
  // Output token of every valid column per sequence; kNoToken for the
  // synthetic stream column.
  std::vector<std::vector<TokenId>> column_tokens;

  std::size_t row(std::size_t b, std::size_t l) const { return b * length + l; }
  std::size_t valid_columns(std::size_t b) const { return column_tokens[b].size(); }
  // Column index of a token in sequence b, or npos.
  std::size_t column_of(std::size_t b, TokenId token) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

// Combines per-stream scores z[(b,s,l), t] over the V_n+2 table rows into
// vocabulary logits: base columns averaged over active streams, column
// base_size + s taken from stream s's actual-row score.
Tensor combine_stream_scores(const Tensor& scores, const StreamLayout& layout,
                             std::size_t base_size);

// Projection against the tied table; `cosine` normalises hidden rows and
// table rows first.
Logits project(const StreamBatch& h, const Tensor& table, const Vocabulary& vocab, bool cosine);

// Copy of a batch with streams reordered per sequence: new stream s takes old
// stream perm[b][s]. Occupancy and stream ids follow; used to state
// equivariance.
StreamBatch permute_streams(const StreamBatch& h,
                            std::span<const std::vector<std::size_t>> perm);

}  // namespace sit
