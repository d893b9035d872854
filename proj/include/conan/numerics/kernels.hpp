#pragma once

// Inner-loop arithmetic kernels. Each kernel has a portable scalar reference
// and, on x86-64, an AVX2+FMA variant; the active table is chosen once at
// startup from CPU detection and can be pinned with CONAN_SIMD=scalar|avx2.

#include <cstddef>
#include <string_view>

namespace conan::kernels {

struct KernelTable {
  const char* name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y = alpha * x + beta * y, elementwise
  void (*axpby)(double alpha, const double* x, double beta, double* y,
                std::size_t n);
  // y += x * z, elementwise
  void (*fma_accumulate)(const double* x, const double* z, double* y,
                         std::size_t n);
  double (*sum_squares)(const double* x, std::size_t n);

  // C[m x n] = A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t k, std::size_t n, const double* a,
                  const double* b, double* c);
  // C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt_acc)(std::size_t m, std::size_t k, std::size_t n,
                      const double* a, const double* b, double* c);
  // C[k x n] += A[m x k]^T * B[m x n]
  void (*gemm_tn_acc)(std::size_t m, std::size_t k, std::size_t n,
                      const double* a, const double* b, double* c);
};

const KernelTable& scalar_table();

// nullptr when the binary was built without AVX2 support or the CPU lacks it.
const KernelTable* avx2_table();

bool cpu_has_avx2();

// Table in use by every tensor operation.
const KernelTable& active();

// Pins the active table. Accepts "scalar", "avx2" or "auto"; returns false if
// the requested variant is unavailable (the active table is left unchanged).
bool select(std::string_view which);

// Restores the selection made from the environment at startup.
void reset_from_environment();

}  // namespace conan::kernels
