#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "conan/datagen.hpp"
#include "conan/errors.hpp"
#include "conan/eval.hpp"
#include "json.hpp"
#include "support/model_support.hpp"
#include "support/test_support.hpp"

using namespace conan;
using conan::testing::max_abs_diff;
using conan::testing::random_tensor;
using conan::testing::template_from;

TEST_SUITE("gap") {
  TEST_CASE("examples") {
    CHECK(gap_aggregate(template_from(Tensor::matrix({{2, 3}, {2, 3}}), Distribution::probe)) == Tensor::vector({2, 3}));
    CHECK(gap_aggregate(template_from(Tensor::matrix({{1, 0}, {0, 1}}), Distribution::probe)) ==
          Tensor::vector({0.5, 0.5}));
  }

  TEST_CASE("equals the pipeline with uniform weights") {
    const Model m = init_model(conan::testing::small_config(), 71);
    std::mt19937_64 rng(72);
    for (Distribution dist : {Distribution::gallery, Distribution::probe}) {
      const Template t = template_from(random_tensor(rng, {6, 8}), dist);
      const AggregationResult r = aggregate_template(t, m, 1e15);
      for (double w : r.weights) CHECK(std::abs(w - 1.0 / 6.0) < 1e-14);
      CHECK(max_abs_diff(r.pooled, gap_aggregate(t)) < 1e-14);
    }
  }
}

TEST_SUITE("verification") {
  TEST_CASE("hand-built six-score fixture") {
    const std::vector<double> scores{0.9, 0.8, 0.6, 0.5, 0.3, 0.2};
    const std::vector<bool> mated{true, false, true, false, true, false};
    const auto r = verification_metrics(scores, mated, {1.0 / 3.0, 2.0 / 3.0, 1.0, 0.1});
    REQUIRE(r.size() == 4);
    CHECK(*r[0].threshold == 0.8);
    CHECK(*r[0].tar == doctest::Approx(1.0 / 3.0));
    CHECK(*r[1].threshold == 0.5);
    CHECK(*r[1].tar == doctest::Approx(2.0 / 3.0));
    CHECK(*r[2].threshold == 0.2);
    CHECK(*r[2].tar == 1.0);
    CHECK_FALSE(r[3].threshold.has_value());
    CHECK_FALSE(r[3].tar.has_value());
  }

  TEST_CASE("perfect separation") {
    std::vector<double> scores;
    std::vector<bool> mated;
    for (int i = 0; i < 2000; ++i) scores.push_back(-1.0 + i * 1e-4), mated.push_back(false);
    for (int i = 0; i < 50; ++i) scores.push_back(0.5 + i * 1e-3), mated.push_back(true);
    for (const auto& t : verification_metrics(scores, mated, kFarTargets)) CHECK(*t.tar == 1.0);
  }

  TEST_CASE("same distribution gives TAR near FAR") {
    std::mt19937_64 rng(73);
    std::normal_distribution<double> n;
    std::vector<double> scores;
    std::vector<bool> mated;
    const int ng = 20000;
    for (int i = 0; i < ng; ++i) scores.push_back(n(rng)), mated.push_back(true);
    for (int i = 0; i < 20000; ++i) scores.push_back(n(rng)), mated.push_back(false);
    for (const auto& t : verification_metrics(scores, mated, kFarTargets)) {
      const double sd = std::sqrt(t.far_target * (1 - t.far_target) / ng);
      CHECK(std::abs(*t.tar - t.far_target) < 3 * sd + 1e-4);
    }
  }

  TEST_CASE("depends only on score order") {
    std::mt19937_64 rng(74);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> scores, warped;
    std::vector<bool> mated;
    for (int i = 0; i < 3000; ++i) {
      const bool m = i % 7 == 0;
      scores.push_back(u(rng) + (m ? 0.4 : 0.0));
      warped.push_back(std::exp(3 * scores.back()));
      mated.push_back(m);
    }
    const auto a = verification_metrics(scores, mated, kFarTargets);
    const auto b = verification_metrics(warped, mated, kFarTargets);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].tar == b[i].tar);
  }

  TEST_CASE("TAR grows with FAR and small sets are undefined") {
    std::vector<double> scores{0.1, 0.2, 0.3, 0.9, 0.8};
    std::vector<bool> mated{false, false, false, true, false};
    const auto r = verification_metrics(scores, mated, {0.001, 0.3, 0.5});
    CHECK_FALSE(r[0].tar.has_value());
    CHECK(*r[1].tar <= *r[2].tar);
    CHECK_THROWS_AS(verification_metrics({0.3}, {true}, kFarTargets), EvaluationError);
  }
}

TEST_SUITE("identification") {
  TEST_CASE("mated highest everywhere") {
    const Tensor s = Tensor::matrix({{0.9, 0.1, 0.2}, {0.0, 0.5, 0.4}});
    const auto id = identification_metrics(s, {true, false, false, false, true, false});
    CHECK(id.rank1 == 1.0);
    CHECK(id.rank5 == 1.0);
  }

  TEST_CASE("ties count against the probe") {
    const Tensor s({3, 4}, 0.25);
    std::vector<bool> mated(12, false);
    for (std::size_t i = 0; i < 3; ++i) mated[i * 4 + i] = true;
    const auto id = identification_metrics(s, mated);
    CHECK(id.rank1 == 0.0);
    CHECK(id.ranks == std::vector<std::size_t>{4, 4, 4});
  }

  TEST_CASE("random 10x10 against a sort") {
    std::mt19937_64 rng(75);
    std::uniform_int_distribution<int> q(0, 6);
    for (int rep = 0; rep < 20; ++rep) {
      Tensor s({10, 10});
      for (double& x : s.values()) x = q(rng) / 6.0;  // plenty of ties
      std::vector<bool> mated(100, false);
      std::vector<std::size_t> col(10);
      for (std::size_t i = 0; i < 10; ++i) mated[i * 10 + (col[i] = (i * 3 + rep) % 10)] = true;
      const auto id = identification_metrics(s, mated);
      for (std::size_t i = 0; i < 10; ++i) {
        std::vector<std::pair<double, int>> row;  // mated sorts after equal scores
        for (std::size_t j = 0; j < 10; ++j) row.push_back({-s.at(i, j), j == col[i] ? 1 : 0});
        std::sort(row.begin(), row.end());
        const auto pos = std::find_if(row.begin(), row.end(), [](auto& p) { return p.second == 1; });
        CHECK(id.ranks[i] == static_cast<std::size_t>(pos - row.begin()) + 1);
      }
      for (std::size_t k : {1u, 5u}) {
        double hits = 0;
        for (std::size_t r : id.ranks) hits += r <= k;
        CHECK(id.rank(k) == hits / 10.0);
      }
      CHECK(id.rank5 >= id.rank1);
    }
  }

  TEST_CASE("each row needs one mated entry") {
    CHECK_THROWS_AS(identification_metrics(Tensor::matrix({{0.1, 0.2}}), {true, true}), EvaluationError);
    CHECK_THROWS_AS(identification_metrics(Tensor::matrix({{0.1, 0.2}}), {false, false}), EvaluationError);
  }
}

TEST_SUITE("weight quality") {
  TEST_CASE("spearman reference values") {
    CHECK(spearman({1, 2, 3}, {10, 20, 30}) == doctest::Approx(1.0));
    CHECK(spearman({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(spearman({1, 2, 2, 3, 0.5}, {0, 0, 1, 1, 1}) == doctest::Approx(0.1480872194397731).epsilon(1e-12));
    CHECK(spearman({0.1, 0.4, 0.4, 0.2, 0.9, 0.9}, {1, 3, 2, 2, 5, 4}) ==
          doctest::Approx(0.9404032585917882).epsilon(1e-12));
  }

  TEST_CASE("labels ranked like the weights") {
    // Binary labels against weights that order them perfectly: every
    // informative weight is above every junk weight.
    const auto q = weight_quality({{{0.4, 0.1, 0.3, 0.2}, {1, 0, 1, 0}}, {{0.3, 0.7}, {0, 1}}});
    CHECK(q.templates == 2);
    CHECK(q.mean > 0.85);
    CHECK(weight_quality({{{1, 2, 3}, {1, 2, 3}}}).mean == doctest::Approx(1.0));
  }

  TEST_CASE("uniform weights and single-class templates") {
    CHECK(weight_quality({{{0.25, 0.25, 0.25, 0.25}, {1, 0, 1, 0}}}).mean == 0.0);
    const auto q = weight_quality({{{0.2, 0.8}, {1, 1}}, {{0.9, 0.1}, {1, 0}}});
    CHECK(q.templates == 1);
    CHECK(q.mean == doctest::Approx(1.0));
  }
}

TEST_SUITE("reports") {
  SynthConfig small_world() {
    SynthConfig c;
    c.n_subjects = 6;
    c.n_train_subjects = 0;
    c.n_val_subjects = 0;
    c.d = 8;
    c.seed = 76;
    return c;
  }

  TEST_CASE("match scores are symmetric cosines") {
    std::mt19937_64 rng(77);
    for (int i = 0; i < 20; ++i) {
      const Tensor a = random_tensor(rng, {8}), b = random_tensor(rng, {8});
      CHECK(std::abs(cosine_similarity(a.values(), b.values()) - cosine_similarity(b.values(), a.values())) < 1e-12);
    }
    const Dataset ds = generate(small_world());
    const MatchResult m = match_split(ds, Split::test, gap_aggregator());
    CHECK(m.scores.rows() == 24);
    CHECK(m.scores.cols() == 6);
    for (double s : m.scores.values()) CHECK(std::abs(s) <= 1.0);
    const MatchResult t = match_split(ds, Split::test, gap_aggregator(), 3);
    CHECK(t.scores == m.scores);
  }

  TEST_CASE("ablation rows, warnings and formats") {
    const Dataset ds = generate(small_world());
    ModelConfig c = conan::testing::small_config();
    ModelConfig mean_only = c;
    mean_only.layout = SummaryLayout::preset("mean");
    const Model mm = init_model(mean_only, 1);
    CHECK(mm.params.get(param_names::kW1).value.rows() == 8);
    const EvalReport r = ablation_suite(
        ds, Split::test, {{"mean", mm}, {"mean+var", std::nullopt}, {"full", init_model(c, 2)}});
    REQUIRE(r.rows.size() == 2);
    CHECK(r.rows[1].name == "full");
    CHECK(r.rows[1].weight_quality.has_value());
    CHECK(r.rows[1].verification.size() == 3);
    CHECK(r.warnings.size() == 1);
    std::size_t lines = 0;
    std::istringstream in(r.to_json_lines());
    for (std::string line; std::getline(in, line); ++lines) CHECK(nlohmann::json::parse(line).is_object());
    CHECK(lines == 3);
    const std::string table = r.to_table();
    CHECK(table.find("full") != std::string::npos);
    CHECK(table.find("undefined") != std::string::npos);  // 1e-3 FAR needs 1000 non-mated scores
  }

  TEST_CASE("weight dump") {
    const Model m = init_model(conan::testing::small_config(), 3);
    std::mt19937_64 rng(78);
    const Template t = template_from(random_tensor(rng, {5, 8}), Distribution::probe);
    const auto rows = weight_dump(t, aggregate_template(t, m));
    REQUIRE(rows.size() == 5);
    double sum = 0;
    for (const auto& r : rows) sum += r.weight;
    CHECK(sum == doctest::Approx(1.0));
    CHECK(rows[2].media_id == t.embeddings[2].media_id);
  }
}
