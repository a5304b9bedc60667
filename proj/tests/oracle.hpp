#pragma once

// Naive reference implementations used as test oracles.

#include <algorithm>
#include <cmath>
#include <vector>

#include "sit/attention.hpp"
#include "sit/tensor.hpp"

namespace sit::oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

inline Mat lin(const Mat& x, const Tensor& w, const Tensor& b) {
  Mat out(x.size(), std::vector<double>(w.dim(1), 0.0));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < w.dim(1); ++j) {
      double s = b.data()[j];
      for (std::size_t p = 0; p < w.dim(0); ++p) s += x[i][p] * w.at(p, j);
      out[i][j] = s;
    }
  return out;
}

inline Mat rope_oracle(Mat x, std::size_t head_dim, double base) {
  for (std::size_t pos = 0; pos < x.size(); ++pos) {
    for (std::size_t h0 = 0; h0 < x[pos].size(); h0 += head_dim) {
      for (std::size_t j = 0; j < head_dim / 2; ++j) {
        const double a = static_cast<double>(pos) * std::pow(base, -2.0 * j / static_cast<double>(head_dim));
        const double x0 = x[pos][h0 + 2 * j], x1 = x[pos][h0 + 2 * j + 1];
        x[pos][h0 + 2 * j] = x0 * std::cos(a) - x1 * std::sin(a);
        x[pos][h0 + 2 * j + 1] = x0 * std::sin(a) + x1 * std::cos(a);
      }
    }
  }
  return x;
}

// Naive multi-head attention for one query sequence and one key sequence.
inline Mat mha_oracle(const MultiHeadAttention& p, const AttentionConfig& cfg, const Mat& qin,
               const Mat& kvin, const AttentionMask& mask) {
  const std::size_t dh = cfg.head_dim();
  auto q = rope_oracle(lin(qin, p.wq, p.bq), dh, cfg.rope_base);
  auto k = rope_oracle(lin(kvin, p.wk, p.bk), dh, cfg.rope_base);
  auto v = lin(kvin, p.wv, p.bv);
  Mat o(q.size(), std::vector<double>(cfg.d_model, 0.0));
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    for (std::size_t i = 0; i < q.size(); ++i) {
      std::vector<double> s(k.size(), 0.0);
      double mx = -1e300;
      for (std::size_t j = 0; j < k.size(); ++j) {
        if (!mask.allows(i, j)) continue;
        for (std::size_t c = 0; c < dh; ++c) s[j] += q[i][h * dh + c] * k[j][h * dh + c];
        s[j] /= std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, s[j]);
      }
      double z = 0;
      for (std::size_t j = 0; j < k.size(); ++j) {
        s[j] = mask.allows(i, j) ? std::exp(s[j] - mx) : 0.0;
        z += s[j];
      }
      for (std::size_t j = 0; j < k.size(); ++j)
        for (std::size_t c = 0; c < dh; ++c) o[i][h * dh + c] += s[j] / z * v[j][h * dh + c];
    }
  }
  Tensor ot({o.size(), cfg.d_model});
  for (std::size_t i = 0; i < o.size(); ++i)
    for (std::size_t j = 0; j < cfg.d_model; ++j) ot.data()[i * cfg.d_model + j] = o[i][j];
  return lin(to_mat(ot), p.wo, p.bo);
}

inline double max_diff(const Tensor& t, const Mat& m, std::size_t row0 = 0) {
  double worst = 0;
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[i].size(); ++j)
      worst = std::max(worst, std::abs(t.at(row0 + i, j) - m[i][j]));
  return worst;
}

inline Mat rows_of(const Tensor& t, std::size_t row0, std::size_t n) {
  Mat m(n, std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(row0 + i, j);
  return m;
}

inline Mat layer_norm(const Mat& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
  Mat out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = static_cast<double>(x[i].size());
    double mean = 0.0, var = 0.0;
    for (double v : x[i]) mean += v;
    mean /= n;
    for (double v : x[i]) var += (v - mean) * (v - mean);
    var /= n;
    for (std::size_t j = 0; j < x[i].size(); ++j) {
      out[i][j] = (x[i][j] - mean) / std::sqrt(var + eps) * gain.data()[j] + bias.data()[j];
    }
  }
  return out;
}

inline Mat add(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  return a;
}

inline Mat relu(Mat a) {
  for (auto& r : a)
    for (double& v : r) v = std::max(v, 0.0);
  return a;
}

}  // namespace sit::oracle
