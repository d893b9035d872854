#include <atomic>
#include <cstdlib>
#include <string>

#include "conan/numerics/kernels.hpp"

namespace conan::kernels {

#if defined(CONAN_HAVE_AVX2)
const KernelTable* avx2_kernel_table();
#endif

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* avx2_table() {
#if defined(CONAN_HAVE_AVX2)
  if (cpu_has_avx2()) return avx2_kernel_table();
#endif
  return nullptr;
}

namespace {

const KernelTable* best_available() {
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

const KernelTable* from_environment() {
  const char* env = std::getenv("CONAN_SIMD");
  if (env != nullptr && std::string(env) == "scalar") return &scalar_table();
  return best_available();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{from_environment()};
  return current;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

bool select(std::string_view which) {
  const KernelTable* chosen = nullptr;
  if (which == "scalar") {
    chosen = &scalar_table();
  } else if (which == "avx2") {
    chosen = avx2_table();
  } else if (which == "auto") {
    chosen = best_available();
  }
  if (chosen == nullptr) return false;
  slot().store(chosen, std::memory_order_release);
  return true;
}

void reset_from_environment() {
  slot().store(from_environment(), std::memory_order_release);
}

}  // namespace conan::kernels
