#pragma once

// Inner-loop kernels for the tensor library.
//
// Every kernel has a scalar reference implementation; an AVX2+FMA variant is
// compiled in a separate translation unit and selected at runtime when the
// CPU supports it. gemm and axpy accumulate each output element in ascending
// index order with fused multiply-add in both variants, so their results are
// bit-identical across ISAs. dot uses lane-parallel partial sums in the AVX2
// variant and only agrees with the scalar one to rounding.

#include <cstddef>
#include <span>
#include <string_view>

namespace sit::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;

  // C[m x n] = A[m x k] * B[k x n], or C += A * B when accumulate is set.
  // Row-major with explicit leading dimensions.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a,
               std::size_t lda, const double* b, std::size_t ldb, double* c,
               std::size_t ldc, bool accumulate);

  double (*dot)(const double* x, const double* y, std::size_t n);

  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
};

const KernelTable& scalar_kernels();

// nullptr when the AVX2 translation unit was not built for this target.
const KernelTable* avx2_kernels();

bool cpu_has_avx2_fma();

// Kernel table used by the tensor ops. Defaults to the best supported ISA;
// the SIT_FORCE_SCALAR environment variable pins the scalar table.
const KernelTable& active_kernels();

// Overrides the runtime choice (tests and benchmarks). Throws ConfigError if
// the requested ISA is unavailable.
void select_isa(Isa isa);

// Pairwise (tree) summation in ascending index order; fixed association for
// a given length.
double pairwise_sum(std::span<const double> values);

// dst[n x m] = src[m x n]^T
void transpose(std::size_t m, std::size_t n, const double* src, double* dst);

}  // namespace sit::simd
