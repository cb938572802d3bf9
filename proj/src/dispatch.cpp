#include <atomic>
#include <cstdlib>
#include <string>

#include "kernel_common.hpp"
#include "rsr/error.hpp"
#include "rsr/parallel.hpp"

namespace rsr {

unsigned default_threads() {
  if (const char* env = std::getenv("RSR_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return 1;
}

namespace simd {

namespace {

Isa initial_isa() noexcept {
  if (const char* env = std::getenv("RSR_ISA")) {
    const std::string want(env);
    if (want == "scalar") return Isa::Scalar;
    if (want == "avx2" && isa_supported(Isa::Avx2)) return Isa::Avx2;
  }
  return best_supported_isa();
}

std::atomic<Isa>& active() noexcept {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

bool isa_supported(Isa isa) noexcept {
  if (isa == Isa::Scalar) return true;
#if defined(__x86_64__)
  return avx2_compiled() && __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa best_supported_isa() noexcept { return isa_supported(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar; }

Isa active_isa() noexcept { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa))
    throw Error(ErrorKind::InvalidConfig, std::string("ISA not supported here: ") +
                                              std::string(isa_name(isa)));
  active().store(isa, std::memory_order_relaxed);
}

const KernelTable& kernel_table(Isa isa) {
  if (!isa_supported(isa))
    throw Error(ErrorKind::InvalidConfig, std::string("ISA not supported here: ") +
                                              std::string(isa_name(isa)));
  return isa == Isa::Avx2 ? avx2_kernel_table() : scalar_kernel_table();
}

const KernelTable& kernel_table() noexcept {
  return active_isa() == Isa::Avx2 ? avx2_kernel_table() : scalar_kernel_table();
}

}  // namespace simd
}  // namespace rsr
