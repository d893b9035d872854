#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "conan/numerics/kernels.hpp"
#include "support/test_support.hpp"

using conan::kernels::KernelTable;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

// Bound on reassociation error: n * eps * sum |a_i b_i|.
double dot_bound(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] * b[i]);
  return (static_cast<double>(a.size()) + 2.0) * 2.3e-16 * s + 1e-300;
}

void check_against_scalar(const KernelTable& simd) {
  const KernelTable& ref = conan::kernels::scalar_table();
  std::mt19937_64 rng(11);
  for (std::size_t n = 0; n <= 67; ++n) {
    const auto a = random_vec(rng, n);
    const auto b = random_vec(rng, n);
    CHECK(std::abs(simd.dot(a.data(), b.data(), n) - ref.dot(a.data(), b.data(), n)) <=
          dot_bound(a, b));
    CHECK(std::abs(simd.sum_squares(a.data(), n) - ref.sum_squares(a.data(), n)) <=
          dot_bound(a, a));

    auto y1 = b, y2 = b;
    simd.axpy(0.7, a.data(), y1.data(), n);
    ref.axpy(0.7, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-15));

    y1 = b;
    y2 = b;
    simd.axpby(-1.5, a.data(), 0.25, y1.data(), n);
    ref.axpby(-1.5, a.data(), 0.25, y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y1[i] - y2[i]) <= 1e-14 * (1 + std::abs(y2[i])));

    y1 = b;
    y2 = b;
    simd.fma_accumulate(a.data(), a.data(), y1.data(), n);
    ref.fma_accumulate(a.data(), a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y1[i] - y2[i]) <= 1e-14 * (1 + std::abs(y2[i])));
  }

  for (auto [m, k, n] : {std::tuple<std::size_t, std::size_t, std::size_t>{1, 1, 1},
                         {3, 4, 2},
                         {5, 9, 7},
                         {17, 33, 12},
                         {32, 32, 32}}) {
    const auto a = conan::testing::random_tensor(rng, {m, k});
    const auto b = conan::testing::random_tensor(rng, {k, n});
    const auto bt = conan::testing::random_tensor(rng, {n, k});
    const auto g = conan::testing::random_tensor(rng, {m, n});
    const auto oracle = conan::testing::naive_matmul(a, b);

    std::vector<double> c1(m * n), c2(m * n);
    simd.gemm_nn(m, k, n, a.data(), b.data(), c1.data());
    ref.gemm_nn(m, k, n, a.data(), b.data(), c2.data());
    for (std::size_t i = 0; i < m * n; ++i) {
      CHECK(std::abs(c1[i] - oracle[i]) <= 1e-12 * (1 + std::abs(oracle[i])) * k);
      CHECK(std::abs(c1[i] - c2[i]) <= 1e-12 * (1 + std::abs(oracle[i])) * k);
    }

    std::vector<double> d1(m * n, 1.0), d2(m * n, 1.0);
    simd.gemm_nt_acc(m, k, n, a.data(), bt.data(), d1.data());
    ref.gemm_nt_acc(m, k, n, a.data(), bt.data(), d2.data());
    for (std::size_t i = 0; i < m * n; ++i) CHECK(std::abs(d1[i] - d2[i]) <= 1e-12 * k);

    std::vector<double> e1(k * n, 0.5), e2(k * n, 0.5);
    simd.gemm_tn_acc(m, k, n, a.data(), g.data(), e1.data());
    ref.gemm_tn_acc(m, k, n, a.data(), g.data(), e2.data());
    for (std::size_t i = 0; i < k * n; ++i) CHECK(std::abs(e1[i] - e2[i]) <= 1e-12 * m);
  }
}

}  // namespace

TEST_CASE("scalar kernels agree with a long-double triple loop") {
  check_against_scalar(conan::kernels::scalar_table());
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  const KernelTable* simd = conan::kernels::avx2_table();
  if (simd == nullptr) {
    MESSAGE("AVX2 unavailable on this host; equivalence check skipped");
    return;
  }
  check_against_scalar(*simd);
}

TEST_CASE("kernel selection") {
  REQUIRE(conan::kernels::select("scalar"));
  CHECK(std::string(conan::kernels::active().name) == "scalar");
  CHECK_FALSE(conan::kernels::select("sse9"));
  CHECK(std::string(conan::kernels::active().name) == "scalar");
  if (conan::kernels::avx2_table() != nullptr) {
    REQUIRE(conan::kernels::select("avx2"));
    CHECK(std::string(conan::kernels::active().name) == "avx2");
  } else {
    CHECK_FALSE(conan::kernels::select("avx2"));
  }
  conan::kernels::reset_from_environment();
}
