#include <doctest.h>

#include <numeric>

#include "conan/attention.hpp"
#include "conan/errors.hpp"
#include "conan/numerics/fd_check.hpp"
#include "support/oracles.hpp"
#include "support/model_support.hpp"
#include "support/test_support.hpp"

using namespace conan;
using conan::testing::max_abs_diff;
using conan::testing::random_tensor;

namespace {

AttentionParams random_params(std::mt19937_64& rng, std::size_t d, std::size_t heads) {
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  return AttentionParams{random_tensor(rng, {d, d}, s), random_tensor(rng, {d, d}, s),
                         random_tensor(rng, {d, d}, s), random_tensor(rng, {d, d}, s),
                         random_tensor(rng, {d}, 0.5), random_tensor(rng, {d}, 0.5), heads};
}

}  // namespace

TEST_SUITE("attend_token") {
  TEST_CASE("matches the loop oracle") {
    std::mt19937_64 rng(21);
    const AttentionParams p = random_params(rng, 8, 2);
    const Tensor s = random_tensor(rng, {3, 8});
    const TokenAttentionResult r = attend_token(s, Distribution::probe, p);
    CHECK(max_abs_diff(r.token_output, conan::testing::attention_oracle(s, p.dte_probe, p)) < 1e-10);
  }

  TEST_CASE("100 random instances") {
    std::mt19937_64 rng(22);
    std::uniform_int_distribution<std::size_t> nd(1, 9);
    const std::size_t head_options[] = {1, 2, 4};
    for (int i = 0; i < 100; ++i) {
      const std::size_t heads = head_options[i % 3], d = heads * (1 + i % 4), n = nd(rng);
      const AttentionParams p = random_params(rng, d, heads);
      const Tensor s = random_tensor(rng, {n, d});
      const Distribution dist = i % 2 ? Distribution::probe : Distribution::gallery;
      const TokenAttentionResult r = attend_token(s, dist, p);
      CHECK(max_abs_diff(r.token_output, conan::testing::attention_oracle(s, p.token(dist), p)) < 1e-10);
      REQUIRE(r.weights.size() == heads);
      for (const Tensor& w : r.weights) {
        REQUIRE(w.rows() == n + 1);
        for (std::size_t row = 0; row <= n; ++row) {
          double sum = 0.0;
          for (double x : w.row(row)) sum += x;
          CHECK(std::abs(sum - 1.0) < 1e-12);
        }
      }
    }
  }

  TEST_CASE("zero value projection gives a zero token") {
    std::mt19937_64 rng(23);
    AttentionParams p = random_params(rng, 8, 4);
    p.value.fill(0.0);
    for (std::size_t n : {1u, 5u}) {
      const Tensor s = random_tensor(rng, {n, 8});
      CHECK(attend_token(s, Distribution::gallery, p).token_output == Tensor({8}, 0.0));
      CHECK(conan::testing::attention_oracle(s, p.dte_gallery, p) == Tensor({8}, 0.0));
    }
  }

  TEST_CASE("token alone with identity projections attends uniformly") {
    const std::size_t d = 4;
    const Tensor dte = Tensor::vector({0.3, -0.2, 0.5, 0.1});
    const AttentionParams p{Tensor::identity(d), Tensor::identity(d), Tensor::identity(d),
                            Tensor::identity(d), dte, dte, 2};
    const TokenAttentionResult r = attend_token(dte.reshaped({1, d}), Distribution::probe, p);
    for (const Tensor& w : r.weights)
      for (double x : w.values()) CHECK(x == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(max_abs_diff(r.token_output, dte) < 1e-15);
  }

  TEST_CASE("order of embeddings does not matter") {
    std::mt19937_64 rng(24);
    const AttentionParams p = random_params(rng, 12, 4);
    const Tensor s = random_tensor(rng, {7, 12});
    std::vector<std::size_t> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    for (int rep = 0; rep < 10; ++rep) {
      std::shuffle(perm.begin(), perm.end(), rng);
      const Tensor a = attend_token(s, Distribution::probe, p).token_output;
      const Tensor b = attend_token(conan::testing::permute_rows(s, perm), Distribution::probe, p).token_output;
      CHECK(max_abs_diff(a, b) < 1e-10);
    }
  }

  TEST_CASE("probe and gallery tokens differ") {
    std::mt19937_64 rng(25);
    for (int rep = 0; rep < 10; ++rep) {
      const AttentionParams p = random_params(rng, 8, 4);
      const Tensor s = random_tensor(rng, {4, 8});
      const Tensor cp = attend_token(s, Distribution::probe, p).token_output;
      const Tensor cg = attend_token(s, Distribution::gallery, p).token_output;
      CHECK(max_abs_diff(cp, cg) > 1e-6);
    }
  }

  TEST_CASE("head count changes the result") {
    std::mt19937_64 rng(26);
    AttentionParams p = random_params(rng, 8, 4);
    const Tensor s = random_tensor(rng, {5, 8});
    const Tensor four = attend_token(s, Distribution::probe, p).token_output;
    p.heads = 1;
    const Tensor one = attend_token(s, Distribution::probe, p).token_output;
    CHECK(max_abs_diff(four, one) > 1e-6);
    CHECK(max_abs_diff(one, conan::testing::attention_oracle(s, p.dte_probe, p)) < 1e-10);
  }

  TEST_CASE("dimension errors") {
    std::mt19937_64 rng(27);
    const AttentionParams p = random_params(rng, 8, 2);
    CHECK_THROWS_AS(attend_token(random_tensor(rng, {3, 6}), Distribution::probe, p), DimensionError);
    AttentionParams bad = p;
    bad.heads = 3;
    CHECK_THROWS_AS(attend_token(random_tensor(rng, {3, 8}), Distribution::probe, bad), DimensionError);
  }

  TEST_CASE("gradients pass the finite-difference check") {
    std::mt19937_64 rng(28);
    const std::size_t d = 8;
    const AttentionParams p = random_params(rng, d, 4);
    const std::vector<NamedTensor> params{
        {"S", random_tensor(rng, {5, d})}, {"query", p.query},   {"key", p.key},
        {"value", p.value},                {"output", p.output}, {"dte", p.dte_probe},
        {"w", random_tensor(rng, {d})}};
    const ScalarGraph f = [](ad::Tape&, std::span<const ad::Var> v) {
      const AttentionVars av{v[1], v[2], v[3], v[4], v[5], v[5], 4};
      const ad::Var c = attend_token(v[0], Distribution::probe, av).token_output;
      return ad::sum(ad::mul(ad::exp(c), v[6]));
    };
    const FdReport r = fd_check(f, params);
    CHECK(r.passed);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("parameters from an initialised model") {
  const Model m = init_model(conan::testing::small_config(8, 2), 3);
  const AttentionParams p = AttentionParams::from(m);
  CHECK(p.heads == 2);
  CHECK(p.query == m.params.get(param_names::kQuery).value);
  CHECK(p.dte_gallery == m.params.get(param_names::kDteGallery).value);
}
