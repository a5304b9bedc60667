// Runtime ISA selection. Compiled without extended instruction-set flags.

#include <atomic>
#include <cstdlib>

#include "sit/errors.hpp"
#include "sit/simd/kernels.hpp"

namespace sit::simd {
namespace {

const KernelTable* detect() {
  const char* force = std::getenv("SIT_FORCE_SCALAR");
  if (force != nullptr && force[0] != '\0' && force[0] != '0') return &scalar_kernels();
  if (cpu_has_avx2_fma() && avx2_kernels() != nullptr) return avx2_kernels();
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{detect()};
  return table;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

bool cpu_has_avx2_fma() {
#if (defined(__GNUC__) || defined(__clang__)) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& active_kernels() { return *current().load(std::memory_order_relaxed); }

void select_isa(Isa isa) {
  if (isa == Isa::scalar) {
    current().store(&scalar_kernels());
    return;
  }
  if (!cpu_has_avx2_fma() || avx2_kernels() == nullptr) {
    throw ConfigError("AVX2+FMA kernels are not available on this machine");
  }
  current().store(avx2_kernels());
}

}  // namespace sit::simd
