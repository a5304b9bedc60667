#include "sit/attention.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "sit/errors.hpp"
#include "sit/ops.hpp"
#include "sit/simd/kernels.hpp"

namespace sit {

void AttentionConfig::validate() const {
  if (heads == 0 || d_model == 0 || d_model % heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by heads " +
                      std::to_string(heads));
  }
  if (head_dim() % 2 != 0) throw ConfigError("head dimension must be even for rotary embedding");
  if (!(rope_base > 1.0)) throw ConfigError("rope base must exceed 1");
}

AttentionMask AttentionMask::padding(std::size_t query_len, std::size_t key_len,
                                     std::size_t valid_keys) {
  if (valid_keys == 0 || valid_keys > key_len) throw ContractError("padding mask: no valid key");
  AttentionMask m;
  m.kind = Kind::padding;
  m.query_len = query_len;
  m.key_len = key_len;
  m.bits.assign(query_len * key_len, 0);
  for (std::size_t q = 0; q < query_len; ++q) {
    for (std::size_t k = 0; k < valid_keys; ++k) m.bits[q * key_len + k] = 1;
  }
  return m;
}

AttentionMask AttentionMask::causal(std::size_t len, std::size_t valid) {
  if (valid == 0 || valid > len) throw ContractError("causal mask: no valid position");
  AttentionMask m;
  m.kind = Kind::causal_padding;
  m.query_len = len;
  m.key_len = len;
  m.bits.assign(len * len, 0);
  for (std::size_t q = 0; q < len; ++q) {
    for (std::size_t k = 0; k <= q && k < valid; ++k) m.bits[q * len + k] = 1;
  }
  return m;
}

void AttentionPlan::validate() const {
  if (!masks) throw ContractError("attention plan has no masks");
  if (kv_group.size() != query_groups || mask_index.size() != query_groups ||
      query_active.size() != query_groups) {
    throw ContractError("attention plan: per-group tables have the wrong size");
  }
  for (std::size_t g = 0; g < query_groups; ++g) {
    if (kv_group[g] >= kv_groups) throw ContractError("attention plan: kv group out of range");
    const auto& m = masks->at(mask_index[g]);
    if (m.query_len != query_len || m.key_len != kv_len) {
      throw DimensionError("attention plan: mask is " + std::to_string(m.query_len) + "x" +
                           std::to_string(m.key_len) + ", expected " + std::to_string(query_len) +
                           "x" + std::to_string(kv_len));
    }
  }
}

namespace {

// cos/sin tables [positions][head_dim/2]
struct RopeTables {
  std::vector<double> cos, sin;
};

RopeTables rope_tables(std::span<const std::size_t> positions, std::size_t head_dim, double base) {
  const std::size_t half = head_dim / 2;
  RopeTables t;
  t.cos.resize(positions.size() * half);
  t.sin.resize(positions.size() * half);
  std::vector<double> freq(half);
  for (std::size_t j = 0; j < half; ++j) {
    freq[j] = std::pow(base, -2.0 * static_cast<double>(j) / static_cast<double>(head_dim));
  }
  for (std::size_t r = 0; r < positions.size(); ++r) {
    for (std::size_t j = 0; j < half; ++j) {
      const double angle = static_cast<double>(positions[r]) * freq[j];
      t.cos[r * half + j] = std::cos(angle);
      t.sin[r * half + j] = std::sin(angle);
    }
  }
  return t;
}

// Rotation by +angle (forward) or -angle (gradient).
void rotate(std::span<const double> in, std::span<double> out, const RopeTables& t,
            std::size_t rows, std::size_t d, std::size_t head_dim, double sign) {
  const std::size_t half = head_dim / 2;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* c = &t.cos[r * half];
    const double* s = &t.sin[r * half];
    for (std::size_t h0 = 0; h0 < d; h0 += head_dim) {
      for (std::size_t j = 0; j < half; ++j) {
        const std::size_t i = r * d + h0 + 2 * j;
        const double x0 = in[i], x1 = in[i + 1];
        const double sn = sign * s[j];
        out[i] = x0 * c[j] - x1 * sn;
        out[i + 1] = x0 * sn + x1 * c[j];
      }
    }
  }
}

std::vector<std::size_t> periodic_positions(std::size_t rows, std::size_t period) {
  std::vector<std::size_t> pos(rows);
  for (std::size_t r = 0; r < rows; ++r) pos[r] = r % period;
  return pos;
}

// Copies head h of rows [row0, row0+n) into a contiguous [n x dh] block.
void gather_head(const double* src, std::size_t d, std::size_t row0, std::size_t n,
                 std::size_t h0, std::size_t dh, double* dst) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* s = src + (row0 + i) * d + h0;
    std::copy(s, s + dh, dst + i * dh);
  }
}

void scatter_add_head(const double* src, std::size_t d, std::size_t row0, std::size_t n,
                      std::size_t h0, std::size_t dh, double* dst) {
  for (std::size_t i = 0; i < n; ++i) {
    double* t = dst + (row0 + i) * d + h0;
    for (std::size_t j = 0; j < dh; ++j) t[j] += src[i * dh + j];
  }
}

}  // namespace

Tensor rope(const Tensor& x, std::span<const std::size_t> positions, std::size_t head_dim,
            double base) {
  if (x.rank() != 2) throw DimensionError("rope expects a rank-2 tensor");
  const std::size_t rows = x.rows(), d = x.cols();
  if (head_dim == 0 || head_dim % 2 != 0) throw ConfigError("rope needs an even head dimension");
  if (d % head_dim != 0) {
    throw DimensionError("rope: width " + std::to_string(d) + " does not split into heads of " +
                         std::to_string(head_dim));
  }
  if (positions.size() != rows) throw DimensionError("rope: one position per row required");
  auto tables = std::make_shared<RopeTables>(rope_tables(positions, head_dim, base));
  std::vector<double> out(rows * d);
  rotate(x.data(), out, *tables, rows, d, head_dim, 1.0);
  return Tensor::from_op({rows, d}, std::move(out), {x},
                         [x, tables, rows, d, head_dim](const Tensor& result) {
                           if (!x.requires_grad()) return;
                           std::vector<double> g(rows * d);
                           rotate(result.grad(), g, *tables, rows, d, head_dim, -1.0);
                           auto xg = x.grad_buffer();
                           for (std::size_t i = 0; i < g.size(); ++i) xg[i] += g[i];
                         });
}

Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                      const AttentionPlan& plan, std::vector<double>* weights) {
  plan.validate();
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw DimensionError("attention expects rank-2 q, k, v");
  }
  const std::size_t d = q.cols();
  if (k.cols() != d || v.cols() != d) throw DimensionError("attention: q, k, v widths differ");
  if (heads == 0 || d % heads != 0) throw DimensionError("attention: width not divisible by heads");
  if (q.rows() != plan.query_groups * plan.query_len) {
    throw DimensionError("attention: query rows " + std::to_string(q.rows()) +
                         " do not match the plan");
  }
  if (k.rows() != plan.kv_groups * plan.kv_len || v.rows() != k.rows()) {
    throw DimensionError("attention: key/value rows do not match the plan");
  }
  const std::size_t dh = d / heads;
  const std::size_t Lq = plan.query_len, Lk = plan.kv_len;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto& kern = simd::active_kernels();

  // Per kv group and head: K^T [dh x Lk] and V [Lk x dh].
  const std::size_t kv_block = Lk * dh;
  std::vector<double> kt(plan.kv_groups * heads * kv_block);
  std::vector<double> vc(plan.kv_groups * heads * kv_block);
  {
    std::vector<double> tmp(kv_block);
    for (std::size_t g = 0; g < plan.kv_groups; ++g) {
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = (g * heads + h) * kv_block;
        gather_head(k.data().data(), d, g * Lk, Lk, h * dh, dh, tmp.data());
        simd::transpose(Lk, dh, tmp.data(), &kt[off]);
        gather_head(v.data().data(), d, g * Lk, Lk, h * dh, dh, &vc[off]);
      }
    }
  }

  const std::size_t p_block = Lq * Lk;
  auto probs = std::make_shared<std::vector<double>>(plan.query_groups * heads * p_block, 0.0);
  std::vector<double> out(q.rows() * d, 0.0);
  std::vector<double> qh(Lq * dh), oh(Lq * dh);
  for (std::size_t g = 0; g < plan.query_groups; ++g) {
    if (!plan.query_active[g]) continue;
    const auto& mask = (*plan.masks)[plan.mask_index[g]];
    const std::size_t kvg = plan.kv_group[g];
    for (std::size_t h = 0; h < heads; ++h) {
      double* P = &(*probs)[(g * heads + h) * p_block];
      gather_head(q.data().data(), d, g * Lq, Lq, h * dh, dh, qh.data());
      kern.gemm(Lq, Lk, dh, qh.data(), dh, &kt[(kvg * heads + h) * kv_block], Lk, P, Lk, false);
      for (std::size_t i = 0; i < Lq; ++i) {
        double* row = P + i * Lk;
        double mx = -std::numeric_limits<double>::infinity();
        bool any = false;
        for (std::size_t j = 0; j < Lk; ++j) {
          if (!mask.allows(i, j)) continue;
          any = true;
          if (!std::isfinite(row[j])) throw NumericalError("attention: non-finite score");
          mx = std::max(mx, row[j] * scale);
        }
        if (!any) {
          throw ContractError("attention: query row " + std::to_string(i) +
                              " has no unmasked key");
        }
        double total = 0.0;
        for (std::size_t j = 0; j < Lk; ++j) {
          row[j] = mask.allows(i, j) ? std::exp(row[j] * scale - mx) : 0.0;
          total += row[j];
        }
        for (std::size_t j = 0; j < Lk; ++j) row[j] /= total;
      }
      kern.gemm(Lq, dh, Lk, P, Lk, &vc[(kvg * heads + h) * kv_block], dh, oh.data(), dh, false);
      scatter_add_head(oh.data(), d, g * Lq, Lq, h * dh, dh, out.data());
    }
  }
  if (weights != nullptr) *weights = *probs;

  auto kt_shared = std::make_shared<std::vector<double>>(std::move(kt));
  auto vc_shared = std::make_shared<std::vector<double>>(std::move(vc));
  return Tensor::from_op(
      {q.rows(), d}, std::move(out), {q, k, v},
      [q, k, v, heads, plan, probs, kt_shared, vc_shared, dh, Lq, Lk, d, scale,
       kv_block, p_block](const Tensor& result) {
        const auto& kern = simd::active_kernels();
        const auto dout = result.grad();
        std::vector<double> dq(q.rows() * d, 0.0);
        std::vector<double> dk(plan.kv_groups * heads * kv_block, 0.0);
        std::vector<double> dv(plan.kv_groups * heads * kv_block, 0.0);
        std::vector<double> doh(Lq * dh), qh(Lq * dh), pt(p_block), dp(p_block), dst(p_block);
        std::vector<double> vt(kv_block), kc(kv_block), tmp(Lq * dh);
        for (std::size_t g = 0; g < plan.query_groups; ++g) {
          if (!plan.query_active[g]) continue;
          const std::size_t kvg = plan.kv_group[g];
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t kvo = (kvg * heads + h) * kv_block;
            const double* P = &(*probs)[(g * heads + h) * p_block];
            gather_head(dout.data(), d, g * Lq, Lq, h * dh, dh, doh.data());
            gather_head(q.data().data(), d, g * Lq, Lq, h * dh, dh, qh.data());
            // dV += P^T dO
            simd::transpose(Lq, Lk, P, pt.data());
            kern.gemm(Lk, dh, Lq, pt.data(), Lq, doh.data(), dh, &dv[kvo], dh, true);
            // dP = dO V^T
            simd::transpose(Lk, dh, &(*vc_shared)[kvo], vt.data());
            kern.gemm(Lq, Lk, dh, doh.data(), dh, vt.data(), Lk, dp.data(), Lk, false);
            // dS = P * (dP - <dP, P>) * scale
            for (std::size_t i = 0; i < Lq; ++i) {
              const double* pr = P + i * Lk;
              double* dr = dp.data() + i * Lk;
              double dot = 0.0;
              for (std::size_t j = 0; j < Lk; ++j) dot += dr[j] * pr[j];
              for (std::size_t j = 0; j < Lk; ++j) dr[j] = pr[j] * (dr[j] - dot) * scale;
            }
            // dQ = dS K
            simd::transpose(dh, Lk, &(*kt_shared)[kvo], kc.data());
            kern.gemm(Lq, dh, Lk, dp.data(), Lk, kc.data(), dh, tmp.data(), dh, false);
            scatter_add_head(tmp.data(), d, g * Lq, Lq, h * dh, dh, dq.data());
            // dK += dS^T Q
            simd::transpose(Lq, Lk, dp.data(), dst.data());
            kern.gemm(Lk, dh, Lq, dst.data(), Lq, qh.data(), dh, &dk[kvo], dh, true);
          }
        }
        if (q.requires_grad()) {
          auto g = q.grad_buffer();
          for (std::size_t i = 0; i < dq.size(); ++i) g[i] += dq[i];
        }
        for (int which = 0; which < 2; ++which) {
          const Tensor& t = which == 0 ? k : v;
          if (!t.requires_grad()) continue;
          const auto& src = which == 0 ? dk : dv;
          auto g = t.grad_buffer();
          for (std::size_t kvg = 0; kvg < plan.kv_groups; ++kvg) {
            for (std::size_t h = 0; h < heads; ++h) {
              scatter_add_head(&src[(kvg * heads + h) * kv_block], d, kvg * Lk, Lk, h * dh, dh,
                               g.data());
            }
          }
        }
      });
}

MultiHeadAttention MultiHeadAttention::create(ParameterSet& params, const std::string& prefix,
                                              std::size_t d_model, std::mt19937_64& rng) {
  MultiHeadAttention m;
  m.wq = params.add_uniform(prefix + ".wq", {d_model, d_model}, rng);
  m.bq = params.add_constant(prefix + ".bq", {d_model}, 0.0);
  m.wk = params.add_uniform(prefix + ".wk", {d_model, d_model}, rng);
  m.bk = params.add_constant(prefix + ".bk", {d_model}, 0.0);
  m.wv = params.add_uniform(prefix + ".wv", {d_model, d_model}, rng);
  m.bv = params.add_constant(prefix + ".bv", {d_model}, 0.0);
  m.wo = params.add_uniform(prefix + ".wo", {d_model, d_model}, rng);
  m.bo = params.add_constant(prefix + ".bo", {d_model}, 0.0);
  return m;
}

namespace {

Tensor project_attend(const MultiHeadAttention& p, const AttentionConfig& cfg,
                      const Tensor& query_in, const Tensor& key_in, const Tensor& value_in,
                      const AttentionPlan& plan, std::vector<double>* weights) {
  cfg.validate();
  if (query_in.cols() != cfg.d_model || key_in.cols() != cfg.d_model ||
      value_in.cols() != cfg.d_model) {
    throw DimensionError("mha: input width differs from d_model " + std::to_string(cfg.d_model));
  }
  const auto qpos = periodic_positions(query_in.rows(), plan.query_len);
  const auto kpos = periodic_positions(key_in.rows(), plan.kv_len);
  Tensor q = rope(ops::linear(query_in, p.wq, p.bq), qpos, cfg.head_dim(), cfg.rope_base);
  Tensor k = rope(ops::linear(key_in, p.wk, p.bk), kpos, cfg.head_dim(), cfg.rope_base);
  Tensor v = ops::linear(value_in, p.wv, p.bv);
  Tensor o = attention_core(q, k, v, cfg.heads, plan, weights);
  return ops::linear(o, p.wo, p.bo);
}

}  // namespace

Tensor mha(const MultiHeadAttention& p, const AttentionConfig& cfg, const Tensor& query_in,
           const Tensor& kv_in, const AttentionPlan& plan, std::vector<double>* weights) {
  return project_attend(p, cfg, query_in, kv_in, kv_in, plan, weights);
}

AttentionOutput mha(const MultiHeadAttention& p, const AttentionConfig& cfg, const Tensor& q,
                    const Tensor& k, const Tensor& v, const AttentionMask& mask) {
  if (k.rows() != v.rows()) throw DimensionError("mha: key and value row counts differ");
  AttentionPlan plan;
  plan.query_groups = 1;
  plan.query_len = q.rows();
  plan.kv_groups = 1;
  plan.kv_len = k.rows();
  plan.kv_group = {0};
  plan.mask_index = {0};
  plan.query_active = {1};
  plan.masks = std::make_shared<const std::vector<AttentionMask>>(std::vector{mask});
  AttentionOutput out;
  out.output = project_attend(p, cfg, q, k, v, plan, &out.weights);
  return out;
}

BatchMasks self_masks(const StreamLayout& layout, bool causal) {
  auto masks = std::make_shared<std::vector<AttentionMask>>();
  masks->reserve(layout.batch);
  for (std::size_t b = 0; b < layout.batch; ++b) {
    masks->push_back(causal ? AttentionMask::causal(layout.length, layout.lengths[b])
                            : AttentionMask::padding(layout.length, layout.length,
                                                     layout.lengths[b]));
  }
  return masks;
}

BatchMasks cross_masks(const StreamLayout& query, const StreamLayout& keys,
                       std::span<const std::size_t> key_index) {
  if (key_index.size() != query.batch) throw ContractError("cross_masks: one key index per query");
  auto masks = std::make_shared<std::vector<AttentionMask>>();
  masks->reserve(query.batch);
  for (std::size_t b = 0; b < query.batch; ++b) {
    masks->push_back(
        AttentionMask::padding(query.length, keys.length, keys.lengths.at(key_index[b])));
  }
  return masks;
}

AttentionPlan per_stream_plan(const StreamLayout& layout, const BatchMasks& masks) {
  AttentionPlan plan;
  plan.query_groups = layout.batch * layout.streams;
  plan.query_len = layout.length;
  plan.kv_groups = plan.query_groups;
  plan.kv_len = layout.length;
  plan.masks = masks;
  for (std::size_t b = 0; b < layout.batch; ++b) {
    for (std::size_t s = 0; s < layout.streams; ++s) {
      plan.kv_group.push_back(b * layout.streams + s);
      plan.mask_index.push_back(b);
      plan.query_active.push_back(layout.active(b, s) ? 1 : 0);
    }
  }
  return plan;
}

AttentionPlan aggregated_plan(const StreamLayout& layout, const BatchMasks& masks) {
  AttentionPlan plan = per_stream_plan(layout, masks);
  plan.kv_groups = layout.batch;
  for (std::size_t b = 0; b < layout.batch; ++b) {
    for (std::size_t s = 0; s < layout.streams; ++s) plan.kv_group[b * layout.streams + s] = b;
  }
  return plan;
}

Tensor per_stream_attention(const MultiHeadAttention& p, const AttentionConfig& cfg,
                            const StreamBatch& h, const BatchMasks& masks) {
  return mha(p, cfg, h.hidden, h.hidden, per_stream_plan(*h.layout, masks));
}

Tensor aggregated_attention(const MultiHeadAttention& p, const AttentionConfig& cfg,
                            const StreamBatch& h, const BatchMasks& masks) {
  const Tensor g = aggregate(h);
  return mha(p, cfg, h.hidden, g, aggregated_plan(*h.layout, masks));
}

Tensor cross_attention(const MultiHeadAttention& p, const AttentionConfig& cfg,
                       const StreamBatch& dec, const StreamBatch& enc,
                       std::span<const std::size_t> enc_index, CrossMode mode,
                       const BatchMasks& masks) {
  const StreamLayout& dl = *dec.layout;
  const StreamLayout& el = *enc.layout;
  if (enc_index.size() != dl.batch) throw ContractError("cross_attention: one encoder index per sequence");
  for (std::size_t b = 0; b < dl.batch; ++b) {
    if (enc_index[b] >= el.batch) throw ContractError("cross_attention: encoder index out of range");
  }
  AttentionPlan plan;
  plan.query_groups = dl.batch * dl.streams;
  plan.query_len = dl.length;
  plan.kv_len = el.length;
  plan.masks = masks;
  Tensor kv;
  if (mode == CrossMode::per) {
    if (dl.streams > el.streams) throw ContractError("cross_attention: more decoder than encoder streams");
    plan.kv_groups = el.batch * el.streams;
    kv = enc.hidden;
  } else {
    plan.kv_groups = el.batch;
    kv = aggregate(enc);
  }
  for (std::size_t b = 0; b < dl.batch; ++b) {
    const std::size_t e = enc_index[b];
    if (mode == CrossMode::per && dl.stream_ids[b] != el.stream_ids[e]) {
      throw ContractError("cross_attention: decoder and encoder streams differ for sequence " +
                          std::to_string(b));
    }
    for (std::size_t s = 0; s < dl.streams; ++s) {
      plan.kv_group.push_back(mode == CrossMode::per ? e * el.streams + s : e);
      plan.mask_index.push_back(b);
      plan.query_active.push_back(dl.active(b, s) ? 1 : 0);
    }
  }
  return mha(p, cfg, dec.hidden, kv, plan);
}

}  // namespace sit
