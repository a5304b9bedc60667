#include "sit/streams.hpp"

#include <algorithm>
#include <string>

#include "sit/errors.hpp"
#include "sit/ops.hpp"
#include "sit/simd/kernels.hpp"

namespace sit {

std::vector<std::uint8_t> StreamLayout::active_rows() const {
  std::vector<std::uint8_t> out(rows(), 0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t s = 0; s < active_count(b); ++s) {
      std::fill_n(out.begin() + row(b, s, 0), length, std::uint8_t{1});
    }
  }
  return out;
}

namespace {

std::size_t max_length(std::span<const Sequence> seqs) {
  std::size_t L = 0;
  for (const auto& s : seqs) L = std::max(L, s.size());
  return L;
}

void fill_occupancy(StreamLayout& layout, std::span<const Sequence> seqs) {
  layout.occupancy.assign(layout.rows(), 0);
  for (std::size_t b = 0; b < layout.batch; ++b) {
    const auto& ids = layout.stream_ids[b];
    for (std::size_t l = 0; l < seqs[b].size(); ++l) {
      auto it = std::lower_bound(ids.begin(), ids.end(), seqs[b][l]);
      if (it != ids.end() && *it == seqs[b][l]) {
        layout.occupancy[layout.row(b, static_cast<std::size_t>(it - ids.begin()), l)] = 1;
      }
    }
  }
}

}  // namespace

StreamLayout source_layout(const Vocabulary& vocab, std::span<const Sequence> sources) {
  StreamLayout layout;
  layout.batch = sources.size();
  layout.length = max_length(sources);
  layout.streams = 1;
  for (const auto& src : sources) {
    if (src.empty()) throw ContractError("source sequence is empty");
    std::vector<TokenId> ids;
    for (TokenId id : src) {
      vocab.check(id);
      if (vocab.is_interchangeable(id)) ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    layout.streams = std::max(layout.streams, ids.size());
    layout.stream_ids.push_back(std::move(ids));
    layout.lengths.push_back(src.size());
  }
  fill_occupancy(layout, sources);
  return layout;
}

StreamLayout target_layout(const Vocabulary& vocab, std::span<const Sequence> targets,
                           const StreamLayout& source, std::span<const std::size_t> source_index) {
  if (source_index.size() != targets.size()) {
    throw ContractError("target_layout: one source index per target required");
  }
  StreamLayout layout;
  layout.batch = targets.size();
  layout.length = max_length(targets);
  layout.streams = source.streams;
  for (std::size_t b = 0; b < targets.size(); ++b) {
    if (targets[b].empty()) throw ContractError("target prefix is empty");
    const auto& ids = source.stream_ids.at(source_index[b]);
    for (TokenId id : targets[b]) {
      vocab.check(id);
      if (vocab.is_interchangeable(id) && !std::binary_search(ids.begin(), ids.end(), id)) {
        throw ContractError("target token '" + vocab.surface(id) +
                            "' does not occur in the source and has no stream");
      }
    }
    layout.stream_ids.push_back(ids);
    layout.lengths.push_back(targets[b].size());
  }
  fill_occupancy(layout, targets);
  return layout;
}

StreamLayout single_stream_layout(const Vocabulary& vocab, std::span<const Sequence> sequences) {
  StreamLayout layout;
  layout.batch = sequences.size();
  layout.length = max_length(sequences);
  layout.streams = 1;
  for (const auto& seq : sequences) {
    if (seq.empty()) throw ContractError("sequence is empty");
    for (TokenId id : seq) vocab.check(id);
    layout.stream_ids.emplace_back();
    layout.lengths.push_back(seq.size());
  }
  layout.occupancy.assign(layout.rows(), 0);
  return layout;
}

std::vector<std::size_t> stream_lookup_rows(const Vocabulary& vocab, std::span<const Sequence> seqs,
                                            const StreamLayout& layout) {
  std::vector<std::size_t> rows(layout.rows(), static_cast<std::size_t>(kPad));
  for (std::size_t b = 0; b < layout.batch; ++b) {
    const auto& ids = layout.stream_ids[b];
    for (std::size_t s = 0; s < layout.streams; ++s) {
      const TokenId own = s < ids.size() ? ids[s] : kNoToken;
      for (std::size_t l = 0; l < seqs[b].size(); ++l) {
        const TokenId x = seqs[b][l];
        std::size_t r;
        if (!vocab.is_interchangeable(x)) {
          r = static_cast<std::size_t>(x);
        } else {
          r = x == own ? vocab.actual_row() : vocab.placeholder_row();
        }
        rows[layout.row(b, s, l)] = r;
      }
    }
  }
  return rows;
}

StreamBatch embed_streams(const Vocabulary& vocab, std::span<const Sequence> seqs,
                          std::shared_ptr<const StreamLayout> layout, const Tensor& table) {
  if (table.rank() != 2 || table.dim(0) != vocab.embedding_rows()) {
    throw DimensionError("embedding table must have base_size + 2 rows, got " +
                         shape_string(table.shape()));
  }
  const auto rows = stream_lookup_rows(vocab, seqs, *layout);
  return {ops::gather_rows(table, rows), std::move(layout)};
}

StreamBatch embed_streams(const Vocabulary& vocab, const Sequence& x, const Tensor& table) {
  const std::span<const Sequence> one(&x, 1);
  auto layout = std::make_shared<const StreamLayout>(source_layout(vocab, one));
  return embed_streams(vocab, one, std::move(layout), table);
}

Tensor aggregate(const StreamBatch& h) {
  const StreamLayout& layout = *h.layout;
  const std::size_t d = h.width();
  const std::size_t B = layout.batch, L = layout.length;
  if (h.hidden.rows() != layout.rows()) throw DimensionError("aggregate: hidden rows mismatch layout");
  for (std::size_t b = 0; b < B; ++b) {
    if (layout.active_count(b) == 0) throw ContractError("aggregate: no active stream");
  }
  const auto hv = h.hidden.data();
  const auto& kern = simd::active_kernels();
  std::vector<double> out(B * L * d, 0.0);
  // owner[b*L + l] = stream restored at that position, or -1 for the mean.
  std::vector<int> owner(B * L, -1);
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t active = layout.active_count(b);
    const double count = static_cast<double>(active);
    for (std::size_t l = 0; l < L; ++l) {
      double* g = out.data() + (b * L + l) * d;
      for (std::size_t s = 0; s < active; ++s) {
        if (layout.occupied(b, s, l)) owner[b * L + l] = static_cast<int>(s);
      }
      if (owner[b * L + l] >= 0) {
        const double* src = hv.data() + layout.row(b, owner[b * L + l], l) * d;
        std::copy_n(src, d, g);
        continue;
      }
      for (std::size_t s = 0; s < active; ++s) {
        kern.axpy(1.0, hv.data() + layout.row(b, s, l) * d, g, d);
      }
      for (std::size_t c = 0; c < d; ++c) g[c] /= count;
    }
  }
  auto layout_ref = h.layout;
  return Tensor::from_op(
      {B * L, d}, std::move(out), {h.hidden},
      [hidden = h.hidden, layout_ref, owner = std::move(owner), d](const Tensor& r) {
        const StreamLayout& lay = *layout_ref;
        const auto g = r.grad();
        auto dst = hidden.grad_buffer();
        const auto& kern = simd::active_kernels();
        for (std::size_t b = 0; b < lay.batch; ++b) {
          const std::size_t active = lay.active_count(b);
          const double share = 1.0 / static_cast<double>(active);
          for (std::size_t l = 0; l < lay.length; ++l) {
            const double* gr = g.data() + (b * lay.length + l) * d;
            const int own = owner[b * lay.length + l];
            if (own >= 0) {
              kern.axpy(1.0, gr, dst.data() + lay.row(b, own, l) * d, d);
              continue;
            }
            for (std::size_t s = 0; s < active; ++s) {
              kern.axpy(share, gr, dst.data() + lay.row(b, s, l) * d, d);
            }
          }
        }
      });
}

std::size_t Logits::column_of(std::size_t b, TokenId token) const {
  const auto& cols = column_tokens[b];
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (cols[c] == token) return c;
  }
  return npos;
}

Tensor combine_stream_scores(const Tensor& scores, const StreamLayout& layout,
                             std::size_t base_size) {
  const std::size_t table_rows = base_size + 2;
  if (scores.rank() != 2 || scores.dim(1) != table_rows || scores.dim(0) != layout.rows()) {
    throw DimensionError("combine_stream_scores: expected [rows x base_size+2] scores");
  }
  const std::size_t B = layout.batch, S = layout.streams, L = layout.length;
  const std::size_t width = base_size + S;
  const auto z = scores.data();
  std::vector<double> out(B * L * width, 0.0);
  std::vector<std::size_t> active(B);
  for (std::size_t b = 0; b < B; ++b) {
    active[b] = layout.active_count(b);
    const double count = static_cast<double>(active[b]);
    for (std::size_t l = 0; l < L; ++l) {
      double* y = out.data() + (b * L + l) * width;
      for (std::size_t s = 0; s < active[b]; ++s) {
        const double* zr = z.data() + layout.row(b, s, l) * table_rows;
        for (std::size_t t = 0; t < base_size; ++t) y[t] += zr[t];
        y[base_size + s] = zr[base_size];
      }
      for (std::size_t t = 0; t < base_size; ++t) y[t] /= count;
    }
  }
  return Tensor::from_op(
      {B * L, width}, std::move(out), {scores},
      [scores, layout, active = std::move(active), base_size, width, table_rows](const Tensor& r) {
        const auto g = r.grad();
        auto dst = scores.grad_buffer();
        for (std::size_t b = 0; b < layout.batch; ++b) {
          const double share = 1.0 / static_cast<double>(active[b]);
          for (std::size_t l = 0; l < layout.length; ++l) {
            const double* gy = g.data() + (b * layout.length + l) * width;
            for (std::size_t s = 0; s < active[b]; ++s) {
              double* dz = dst.data() + layout.row(b, s, l) * table_rows;
              for (std::size_t t = 0; t < base_size; ++t) dz[t] += gy[t] * share;
              dz[base_size] += gy[base_size + s];
            }
          }
        }
      });
}

Logits project(const StreamBatch& h, const Tensor& table, const Vocabulary& vocab, bool cosine) {
  const StreamLayout& layout = *h.layout;
  const std::size_t n = vocab.base_size();
  Tensor features = cosine ? ops::row_normalize(h.hidden) : h.hidden;
  Tensor weights = cosine ? ops::row_normalize(table) : table;
  Tensor scores = ops::matmul_nt(features, weights);
  Logits out;
  out.values = combine_stream_scores(scores, layout, n);
  out.batch = layout.batch;
  out.length = layout.length;
  for (std::size_t b = 0; b < layout.batch; ++b) {
    std::vector<TokenId> cols(n);
    for (std::size_t t = 0; t < n; ++t) cols[t] = static_cast<TokenId>(t);
    if (layout.stream_ids[b].empty()) {
      cols.push_back(kNoToken);
    } else {
      cols.insert(cols.end(), layout.stream_ids[b].begin(), layout.stream_ids[b].end());
    }
    out.column_tokens.push_back(std::move(cols));
  }
  return out;
}

StreamBatch permute_streams(const StreamBatch& h, std::span<const std::vector<std::size_t>> perm) {
  const StreamLayout& old = *h.layout;
  if (perm.size() != old.batch) throw ContractError("permute_streams: one permutation per sequence");
  auto layout = std::make_shared<StreamLayout>(old);
  const std::size_t d = h.width();
  std::vector<std::size_t> source_rows(old.rows());
  for (std::size_t b = 0; b < old.batch; ++b) {
    const std::size_t active = old.active_count(b);
    if (perm[b].size() != active) throw ContractError("permute_streams: permutation size mismatch");
    for (std::size_t s = 0; s < old.streams; ++s) {
      const std::size_t from = s < active ? perm[b][s] : s;
      if (from >= active && s < active) throw ContractError("permute_streams: index out of range");
      for (std::size_t l = 0; l < old.length; ++l) {
        source_rows[old.row(b, s, l)] = old.row(b, from, l);
        layout->occupancy[old.row(b, s, l)] = old.occupancy[old.row(b, from, l)];
      }
      if (s < old.stream_ids[b].size()) layout->stream_ids[b][s] = old.stream_ids[b][from];
    }
  }
  std::vector<double> data(old.rows() * d);
  const auto hv = h.hidden.data();
  for (std::size_t r = 0; r < source_rows.size(); ++r) {
    std::copy_n(hv.begin() + source_rows[r] * d, d, data.begin() + r * d);
  }
  return {Tensor({old.rows(), d}, std::move(data)), std::move(layout)};
}

}  // namespace sit
