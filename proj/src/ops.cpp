#include "sit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sit/errors.hpp"
#include "sit/simd/kernels.hpp"

namespace sit::ops {
namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (!t.defined() || t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a rank-2 tensor");
  }
}

std::vector<double> transposed(std::size_t m, std::size_t n, std::span<const double> src) {
  std::vector<double> out(m * n);
  simd::transpose(m, n, src.data(), out.data());
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents differ " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(m * n);
  const auto& kern = simd::active_kernels();
  kern.gemm(m, n, k, a.data().data(), k, b.data().data(), n, out.data(), n, false);
  return Tensor::from_op({m, n}, std::move(out), {a, b}, [a, b, m, n, k](const Tensor& r) {
    const auto& kern = simd::active_kernels();
    const double* g = r.grad().data();
    if (a.requires_grad()) {
      const auto bt = transposed(k, n, b.data());
      kern.gemm(m, k, n, g, n, bt.data(), k, a.grad_buffer().data(), k, true);
    }
    if (b.requires_grad()) {
      const auto at = transposed(m, k, a.data());
      kern.gemm(k, n, m, at.data(), m, g, n, b.grad_buffer().data(), n, true);
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("matmul_nt: inner extents differ " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()) + "^T");
  }
  const auto& kern = simd::active_kernels();
  const auto bt = transposed(n, k, b.data());
  std::vector<double> out(m * n);
  kern.gemm(m, n, k, a.data().data(), k, bt.data(), n, out.data(), n, false);
  return Tensor::from_op({m, n}, std::move(out), {a, b}, [a, b, m, n, k](const Tensor& r) {
    const auto& kern = simd::active_kernels();
    const double* g = r.grad().data();
    if (a.requires_grad()) {
      kern.gemm(m, k, n, g, n, b.data().data(), k, a.grad_buffer().data(), k, true);
    }
    if (b.requires_grad()) {
      const auto gt = transposed(m, n, r.grad());
      kern.gemm(n, k, m, gt.data(), m, a.data().data(), k, b.grad_buffer().data(), k, true);
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank2(x, "linear");
  require_rank2(w, "linear");
  const std::size_t rows = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  if (w.dim(0) != in || bias.size() != out_dim) {
    throw DimensionError("linear: " + shape_string(x.shape()) + " by " + shape_string(w.shape()) +
                         " with bias " + shape_string(bias.shape()));
  }
  std::vector<double> out(rows * out_dim);
  const auto bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r) std::copy(bv.begin(), bv.end(), out.begin() + r * out_dim);
  const auto& kern = simd::active_kernels();
  kern.gemm(rows, out_dim, in, x.data().data(), in, w.data().data(), out_dim, out.data(), out_dim,
            true);
  return Tensor::from_op(
      {rows, out_dim}, std::move(out), {x, w, bias}, [x, w, bias, rows, in, out_dim](const Tensor& r) {
        const auto& kern = simd::active_kernels();
        const double* g = r.grad().data();
        if (x.requires_grad()) {
          const auto wt = transposed(in, out_dim, w.data());
          kern.gemm(rows, in, out_dim, g, out_dim, wt.data(), in, x.grad_buffer().data(), in, true);
        }
        if (w.requires_grad()) {
          const auto xt = transposed(rows, in, x.data());
          kern.gemm(in, out_dim, rows, xt.data(), rows, g, out_dim, w.grad_buffer().data(), out_dim,
                    true);
        }
        if (bias.requires_grad()) {
          auto gb = bias.grad_buffer();
          for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < out_dim; ++j) gb[j] += g[i * out_dim + j];
          }
        }
      });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  std::vector<double> out(a.size());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [a, b](const Tensor& r) {
    const auto g = r.grad();
    for (const Tensor* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto dst = t->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v *= factor;
  return Tensor::from_op(x.shape(), std::move(out), {x}, [x, factor](const Tensor& r) {
    const auto g = r.grad();
    auto dst = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += factor * g[i];
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return Tensor::from_op(x.shape(), std::move(out), {x}, [x](const Tensor& r) {
    const auto g = r.grad();
    const auto xv = x.data();
    auto dst = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) dst[i] += g[i];
    }
  });
}

Tensor sum(const Tensor& x) {
  const double total = simd::pairwise_sum(x.data());
  return Tensor::from_op(Shape{}, {total}, {x}, [x](const Tensor& r) {
    const double g = r.grad()[0];
    for (double& v : x.grad_buffer()) v += g;
  });
}

Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> keep) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (!keep.empty() && keep.size() != cols && keep.size() != rows * cols) {
    throw DimensionError("softmax_rows: mask is not broadcastable to " + shape_string(x.shape()));
  }
  const auto xv = x.data();
  std::vector<double> out(rows * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * cols;
    const std::uint8_t* mk =
        keep.empty() ? nullptr : keep.data() + (keep.size() == cols ? 0 : r * cols);
    auto allowed = [&](std::size_t c) {
      return (mk == nullptr || mk[c] != 0) && in[c] != -std::numeric_limits<double>::infinity();
    };
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) {
      if (allowed(c)) mx = std::max(mx, in[c]);
    }
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw ContractError("softmax_rows: row " + std::to_string(r) + " is fully masked");
    }
    double* o = out.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) o[c] = allowed(c) ? std::exp(in[c] - mx) : 0.0;
    const double z = simd::pairwise_sum({o, cols});
    for (std::size_t c = 0; c < cols; ++c) o[c] /= z;
  }
  return Tensor::from_op(x.shape(), std::move(out), {x}, [x, rows, cols](const Tensor& r) {
    const auto g = r.grad();
    const auto y = r.data();
    auto dst = x.grad_buffer();
    for (std::size_t i = 0; i < rows; ++i) {
      double dotv = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dotv += g[i * cols + c] * y[i * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        dst[i * cols + c] += y[i * cols + c] * (g[i * cols + c] - dotv);
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gain.size() != cols || bias.size() != cols) {
    throw DimensionError("layer_norm: affine parameters do not match width " + std::to_string(cols));
  }
  const auto xv = x.data(), gv = gain.data(), bv = bias.data();
  std::vector<double> out(rows * cols);
  std::vector<double> xhat(rows * cols);
  std::vector<double> inv_std(rows);
  std::vector<double> centered(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * cols;
    const double mean = simd::pairwise_sum({in, cols}) / static_cast<double>(cols);
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = in[c] - mean;
      centered[c] = d * d;
    }
    const double var = simd::pairwise_sum(centered) / static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    inv_std[r] = inv;
    for (std::size_t c = 0; c < cols; ++c) {
      const double h = (in[c] - mean) * inv;
      xhat[r * cols + c] = h;
      out[r * cols + c] = h * gv[c] + bv[c];
    }
  }
  return Tensor::from_op(
      x.shape(), std::move(out), {x, gain, bias},
      [x, gain, bias, rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](const Tensor& r) {
        const auto g = r.grad();
        const auto gv = gain.data();
        if (x.requires_grad()) {
          auto dst = x.grad_buffer();
          std::vector<double> dxhat(cols);
          const double n = static_cast<double>(cols);
          for (std::size_t i = 0; i < rows; ++i) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              dxhat[c] = g[i * cols + c] * gv[c];
              mean_d += dxhat[c];
              mean_dx += dxhat[c] * xhat[i * cols + c];
            }
            mean_d /= n;
            mean_dx /= n;
            for (std::size_t c = 0; c < cols; ++c) {
              dst[i * cols + c] += inv_std[i] * (dxhat[c] - mean_d - xhat[i * cols + c] * mean_dx);
            }
          }
        }
        if (gain.requires_grad()) {
          auto dg = gain.grad_buffer();
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t c = 0; c < cols; ++c) dg[c] += g[i * cols + c] * xhat[i * cols + c];
        }
        if (bias.requires_grad()) {
          auto db = bias.grad_buffer();
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t c = 0; c < cols; ++c) db[c] += g[i * cols + c];
        }
      });
}

Tensor row_normalize(const Tensor& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  const auto xv = x.data();
  const auto& kern = simd::active_kernels();
  std::vector<double> out(rows * cols);
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * cols;
    const double n = std::max(std::sqrt(kern.dot(in, in, cols)), kNormalizeEpsilon);
    norms[r] = n;
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = in[c] / n;
  }
  return Tensor::from_op(x.shape(), std::move(out), {x},
                         [x, rows, cols, norms = std::move(norms)](const Tensor& r) {
                           const auto g = r.grad();
                           const auto y = r.data();
                           auto dst = x.grad_buffer();
                           for (std::size_t i = 0; i < rows; ++i) {
                             const double n = norms[i];
                             double proj = 0.0;
                             if (n > kNormalizeEpsilon) {
                               for (std::size_t c = 0; c < cols; ++c)
                                 proj += g[i * cols + c] * y[i * cols + c];
                             }
                             for (std::size_t c = 0; c < cols; ++c) {
                               dst[i * cols + c] += (g[i * cols + c] - y[i * cols + c] * proj) / n;
                             }
                           }
                         });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices) {
  require_rank2(table, "gather_rows");
  const std::size_t vocab = table.dim(0), cols = table.dim(1);
  std::vector<double> out(indices.size() * cols);
  const auto tv = table.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= vocab) {
      throw VocabularyError("gather_rows: row " + std::to_string(indices[i]) + " out of range " +
                            std::to_string(vocab));
    }
    std::copy_n(tv.begin() + indices[i] * cols, cols, out.begin() + i * cols);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return Tensor::from_op({indices.size(), cols}, std::move(out), {table},
                         [table, cols, idx = std::move(idx)](const Tensor& r) {
                           const auto g = r.grad();
                           auto dst = table.grad_buffer();
                           for (std::size_t i = 0; i < idx.size(); ++i) {
                             for (std::size_t c = 0; c < cols; ++c)
                               dst[idx[i] * cols + c] += g[i * cols + c];
                           }
                         });
}

Tensor select_rows(const Tensor& a, const Tensor& b, std::span<const std::uint8_t> take_first) {
  if (a.shape() != b.shape() || take_first.size() != a.rows()) {
    throw DimensionError("select_rows: operand shapes or row mask disagree");
  }
  const std::size_t rows = a.rows(), cols = a.cols();
  std::vector<double> out(rows * cols);
  const auto av = a.data(), bv = b.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& src = take_first[r] ? av : bv;
    std::copy_n(src.begin() + r * cols, cols, out.begin() + r * cols);
  }
  std::vector<std::uint8_t> mask(take_first.begin(), take_first.end());
  return Tensor::from_op(a.shape(), std::move(out), {a, b},
                         [a, b, rows, cols, mask = std::move(mask)](const Tensor& r) {
                           const auto g = r.grad();
                           for (std::size_t i = 0; i < rows; ++i) {
                             const Tensor& t = mask[i] ? a : b;
                             if (!t.requires_grad()) continue;
                             auto dst = t.grad_buffer();
                             for (std::size_t c = 0; c < cols; ++c)
                               dst[i * cols + c] += g[i * cols + c];
                           }
                         });
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout rate must be below 1");
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  std::vector<double> out(x.size());
  const auto xv = x.data();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    mask[i] = u < rate ? 0.0 : keep_scale;
    out[i] = xv[i] * mask[i];
  }
  return Tensor::from_op(x.shape(), std::move(out), {x}, [x, mask = std::move(mask)](const Tensor& r) {
    const auto g = r.grad();
    auto dst = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * mask[i];
  });
}

}  // namespace sit::ops
