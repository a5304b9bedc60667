#pragma once

// Differentiable tensor operations on rank-2 (rows x cols) tensors.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "sit/tensor.hpp"

namespace sit::ops {

inline constexpr double kLayerNormEpsilon = 1e-5;
inline constexpr double kNormalizeEpsilon = 1e-12;

// [m x k] * [k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [m x k] * [n x k]^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// x[rows x in] * w[in x out] + bias[out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor relu(const Tensor& x);
// Scalar sum with pairwise association.
Tensor sum(const Tensor& x);

// Row-wise softmax. A zero entry in `keep` (same size as x, or one row that
// is broadcast) masks the position, as does an input of -inf. A row with no
// unmasked entry throws ContractError.
Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> keep = {});

// Normalisation over the last axis with epsilon kLayerNormEpsilon.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

// Each row divided by max(||row||, kNormalizeEpsilon).
Tensor row_normalize(const Tensor& x);

// out[i] = table[indices[i]]
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices);

// out[r] = take_first[r] ? a[r] : b[r]
Tensor select_rows(const Tensor& a, const Tensor& b, std::span<const std::uint8_t> take_first);

// Inverted dropout. Identity when rate is zero.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

}  // namespace sit::ops
