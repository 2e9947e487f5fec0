#include <atomic>
#include <cstdlib>
#include <string_view>

#include "protoclass/error.hpp"
#include "protoclass/simd/kernels.hpp"

namespace protoclass::simd {

// Variants not compiled for this target.
#if !(defined(__x86_64__) || defined(_M_X64))
const KernelTable* avx2_kernels() noexcept { return nullptr; }
#endif
#if !(defined(__aarch64__) || defined(_M_ARM64))
const KernelTable* neon_kernels() noexcept { return nullptr; }
#endif

namespace {

const KernelTable* table_for(Isa isa) noexcept {
  switch (isa) {
    case Isa::kScalar:
      return &scalar_kernels();
    case Isa::kAvx2:
      return avx2_kernels();
    case Isa::kNeon:
      return neon_kernels();
  }
  return nullptr;
}

bool cpu_has(Isa isa) noexcept {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::kNeon:
#if defined(__aarch64__) || defined(_M_ARM64)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable* pick_default() noexcept {
  const char* env = std::getenv("PROTOCLASS_SIMD");
  const std::string_view want = env ? env : "auto";
  if (want == "scalar") return &scalar_kernels();
  if (want == "avx2" && isa_supported(Isa::kAvx2)) return avx2_kernels();
  if (want == "neon" && isa_supported(Isa::kNeon)) return neon_kernels();
  if (isa_supported(Isa::kAvx2)) return avx2_kernels();
  if (isa_supported(Isa::kNeon)) return neon_kernels();
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& slot() noexcept {
  static std::atomic<const KernelTable*> current{pick_default()};
  return current;
}

}  // namespace

bool isa_supported(Isa isa) noexcept {
  return table_for(isa) != nullptr && cpu_has(isa);
}

std::vector<Isa> supported_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::kScalar, Isa::kAvx2, Isa::kNeon})
    if (isa_supported(isa)) out.push_back(isa);
  return out;
}

const char* isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
    case Isa::kNeon:
      return "neon";
  }
  return "unknown";
}

const KernelTable& active() noexcept {
  return *slot().load(std::memory_order_acquire);
}

void set_active(Isa isa) {
  if (!isa_supported(isa))
    throw ValidationError(std::string("SIMD variant not available: ") +
                          isa_name(isa));
  slot().store(table_for(isa), std::memory_order_release);
}

}  // namespace protoclass::simd
