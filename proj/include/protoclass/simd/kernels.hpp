#pragma once

#include <cstddef>
#include <span>
#include <vector>

// Data-parallel inner loops shared by scoring, clustering, kNN, and training.
//
// Each kernel has a scalar reference implementation and, where the target
// allows it, an AVX2+FMA (x86-64) or NEON (AArch64) variant. The variant is
// picked once at runtime from CPU feature detection; PROTOCLASS_SIMD=scalar
// (or avx2 / neon / auto) overrides the choice. Float inputs are widened and
// accumulated in double on every path, so variants agree to rounding of the
// double accumulation order.

namespace protoclass::simd {

enum class Isa { kScalar, kAvx2, kNeon };

struct KernelTable {
  const char* name;
  Isa isa;
  double (*dot_f32)(const float* a, const float* b, std::size_t n);
  double (*dot_f64)(const double* a, const double* b, std::size_t n);
  double (*sqdist_f64)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy_f64)(double alpha, const double* x, double* y, std::size_t n);
};

const KernelTable& scalar_kernels() noexcept;
// nullptr when the variant was not compiled in.
const KernelTable* avx2_kernels() noexcept;
const KernelTable* neon_kernels() noexcept;

bool isa_supported(Isa isa) noexcept;
std::vector<Isa> supported_isas();
const char* isa_name(Isa isa) noexcept;

const KernelTable& active() noexcept;
// Throws ValidationError if the ISA is not supported on this machine.
void set_active(Isa isa);

inline double dot(std::span<const float> a, std::span<const float> b) noexcept {
  return active().dot_f32(a.data(), b.data(), a.size());
}
inline double dot(std::span<const double> a,
                  std::span<const double> b) noexcept {
  return active().dot_f64(a.data(), b.data(), a.size());
}
inline double squared_distance(std::span<const double> a,
                               std::span<const double> b) noexcept {
  return active().sqdist_f64(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x,
                 std::span<double> y) noexcept {
  active().axpy_f64(alpha, x.data(), y.data(), x.size());
}

}  // namespace protoclass::simd
