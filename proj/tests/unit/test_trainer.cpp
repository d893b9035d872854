#include <doctest.h>

#include <set>

#include "conan/datagen.hpp"
#include "conan/errors.hpp"
#include "conan/trainer.hpp"
#include "support/model_support.hpp"
#include "support/test_support.hpp"

using namespace conan;
using conan::testing::random_tensor;
using conan::testing::template_from;

namespace {

SynthConfig tiny_world(std::uint64_t seed = 1) {
  SynthConfig c;
  c.n_subjects = 4;
  c.n_train_subjects = 12;
  c.n_val_subjects = 6;
  c.d = 8;
  c.seed = seed;
  return c;
}

TrainConfig tiny_training(std::uint64_t seed = 2) {
  TrainConfig t;
  t.subjects_per_batch = 4;
  t.memory_capacity = 16;
  t.max_epochs = 3;
  t.patience = 5;
  t.seed = seed;
  t.log_wall_time = false;
  return t;
}

}  // namespace

TEST_SUITE("adam") {
  TEST_CASE("five steps on a quadratic against a hand-written update") {
    ModelParams params;
    params.add("p", Tensor::vector({0.5, -2.0}), ParamGroup::main);
    params.add("q", Tensor::vector({1.0}), ParamGroup::probe_transform);
    TrainConfig c;
    c.lr_main = 0.1;
    c.lr_probe_transform = 0.01;
    AdamState s = adam_init(params);
    // f = sum (x - 3)^2, gradient 2 (x - 3)
    double x[3] = {0.5, -2.0, 1.0}, m[3] = {}, v[3] = {};
    const double lr[3] = {0.1, 0.1, 0.01};
    for (int step = 1; step <= 5; ++step) {
      std::vector<Tensor> grads{Tensor::vector({2 * (params.get("p").value[0] - 3), 2 * (params.get("p").value[1] - 3)}),
                                Tensor::vector({2 * (params.get("q").value[0] - 3)})};
      adam_update(params, grads, s, c);
      for (int i = 0; i < 3; ++i) {
        const double g = 2 * (x[i] - 3);
        m[i] = 0.9 * m[i] + 0.1 * g;
        v[i] = 0.999 * v[i] + 0.001 * g * g;
        const double mh = m[i] / (1 - std::pow(0.9, step)), vh = v[i] / (1 - std::pow(0.999, step));
        x[i] -= lr[i] * mh / (std::sqrt(vh) + 1e-8);
      }
      CHECK(std::abs(params.get("p").value[0] - x[0]) < 1e-14);
      CHECK(std::abs(params.get("p").value[1] - x[1]) < 1e-14);
      CHECK(std::abs(params.get("q").value[0] - x[2]) < 1e-14);
    }
    CHECK(s.step == 5);
  }

  TEST_CASE("parameter groups cover every tensor once") {
    const Model m = init_model(conan::testing::small_config(), 3);
    std::set<std::string> names;
    std::size_t main = 0, probe = 0;
    for (const auto& p : m.params.all()) {
      CHECK(names.insert(p.name).second);
      const bool is_probe = p.name.rfind("probe.", 0) == 0;
      CHECK((p.group == ParamGroup::probe_transform) == is_probe);
      (is_probe ? probe : main)++;
    }
    CHECK(probe == 2);
    CHECK(main == 12);
    const TrainConfig c;
    CHECK(c.learning_rate(ParamGroup::main) == 1e-2);
    CHECK(c.learning_rate(ParamGroup::probe_transform) == 1e-4);
  }
}

TEST_SUITE("batches") {
  TEST_CASE("two subjects with one template per side") {
    Dataset ds{4, {}};
    std::mt19937_64 rng(4);
    for (const char* s : {"a", "b"})
      for (Distribution dist : {Distribution::gallery, Distribution::probe}) {
        Template t = template_from(random_tensor(rng, {3, 4}), dist, s);
        t.split = Split::train;
        ds.templates.push_back(t);
      }
    const TrainingPool pool = build_pool(ds);
    TrainConfig c;
    c.subjects_per_batch = 16;
    const Batch b = sample_batch(ds, pool, c, rng);
    REQUIRE(b.templates.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
      std::size_t positives = 0;
      for (std::size_t j = 0; j < 4; ++j) positives += i != j && b.templates[i].subject_id == b.templates[j].subject_id;
      CHECK(positives == 1);
      CHECK(b.templates[i].size() >= 2);
    }
  }

  TEST_CASE("subjects without a gallery template are skipped") {
    Dataset ds = generate(tiny_world());
    std::erase_if(ds.templates, [](const Template& t) {
      return t.subject_id == "train-s3" && t.distribution == Distribution::gallery;
    });
    const TrainingPool pool = build_pool(ds);
    CHECK(pool.subjects.size() == 11);
    REQUIRE(pool.warnings.size() == 1);
    CHECK(pool.warnings[0].find("train-s3") != std::string::npos);
    std::mt19937_64 rng(5);
    for (int i = 0; i < 50; ++i)
      for (const Template& t : sample_batch(ds, pool, tiny_training(), rng).templates) CHECK(t.subject_id != "train-s3");
  }

  TEST_CASE("not enough subjects") {
    SynthConfig c = tiny_world();
    Dataset ds = generate(c);
    std::erase_if(ds.templates, [](const Template& t) { return t.split == Split::train && t.subject_id != "train-s0"; });
    CHECK_THROWS_AS(build_pool(ds), DatasetError);
  }

  TEST_CASE("fixed seed gives the same batch sequence") {
    const Dataset ds = generate(tiny_world());
    const TrainingPool pool = build_pool(ds);
    std::mt19937_64 a(7), b(7);
    for (int i = 0; i < 10; ++i) {
      const Batch x = sample_batch(ds, pool, tiny_training(), a), y = sample_batch(ds, pool, tiny_training(), b);
      REQUIRE(x.templates.size() == y.templates.size());
      CHECK(x.templates.size() == 8);
      for (std::size_t k = 0; k < x.templates.size(); ++k) {
        CHECK(x.templates[k].id == y.templates[k].id);
        CHECK(x.templates[k].matrix() == y.templates[k].matrix());
      }
    }
  }
}

TEST_SUITE("train_step") {
  const Dataset ds = generate(tiny_world());

  TEST_CASE("a small step lowers the loss on its batch") {
    TrainConfig c = tiny_training();
    c.lr_main = c.lr_probe_transform = 1e-4;
    const TrainingPool pool = build_pool(ds);
    std::mt19937_64 rng(8);
    for (int rep = 0; rep < 5; ++rep) {
      Model m = init_model(conan::testing::small_config(), 10 + rep);
      AdamState adam = adam_init(m.params);
      const Batch b = sample_batch(ds, pool, c, rng);
      CrossBatchMemory mem(c.memory_capacity), before(c.memory_capacity);
      const double l0 = batch_loss(b, m, before, c);
      const StepResult r = train_step(b, m, adam, mem, c);
      CHECK(r.loss == doctest::Approx(l0).epsilon(1e-12));
      CHECK(batch_loss(b, m, before, c) < l0);
      CHECK(mem.size() == b.templates.size());
    }
  }

  TEST_CASE("zero learning rates freeze the parameters") {
    TrainConfig c = tiny_training();
    c.lr_main = c.lr_probe_transform = 0.0;
    Model m = init_model(conan::testing::small_config(), 11);
    const ModelParams before = m.params;
    AdamState adam = adam_init(m.params);
    CrossBatchMemory mem(8);
    std::mt19937_64 rng(9);
    const TrainingPool pool = build_pool(ds);
    for (int i = 0; i < 3; ++i) train_step(sample_batch(ds, pool, c, rng), m, adam, mem, c);
    CHECK(m.params == before);
  }

  TEST_CASE("thread count does not change the result") {
    const TrainingPool pool = build_pool(ds);
    auto run = [&](unsigned threads) {
      TrainConfig c = tiny_training();
      c.threads = threads;
      Model m = init_model(conan::testing::small_config(), 12);
      AdamState adam = adam_init(m.params);
      CrossBatchMemory mem(c.memory_capacity);
      std::mt19937_64 rng(10);
      std::vector<double> losses;
      for (int i = 0; i < 4; ++i) losses.push_back(train_step(sample_batch(ds, pool, c, rng), m, adam, mem, c).loss);
      return std::make_pair(losses, m.params);
    };
    const auto a = run(1), b = run(3);
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
  }

  TEST_CASE("non-finite values abort the step") {
    TrainConfig c = tiny_training();
    Model m = init_model(conan::testing::small_config(), 13);
    m.params.get(param_names::kW3).value.fill(1e300);
    m.params.get(param_names::kB2).value.fill(1e300);
    AdamState adam = adam_init(m.params);
    CrossBatchMemory mem(8);
    std::mt19937_64 rng(11);
    const Batch b = sample_batch(ds, build_pool(ds), c, rng);
    try {
      train_step(b, m, adam, mem, c);
      FAIL("expected a training error");
    } catch (const TrainingError& e) {
      CHECK(e.diagnostic().find("parameter norms") != std::string::npos);
    }
  }
}

TEST_SUITE("fit") {
  const Dataset ds = generate(tiny_world());

  TEST_CASE("same seed, same loss curve") {
    auto run = [&] {
      TrainerState s = start_training(init_model(conan::testing::small_config(), 14), tiny_training());
      return fit(ds, tiny_training(), s).history;
    };
    const auto a = run(), b = run();
    REQUIRE(a.size() == 3);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].loss == b[i].loss);
      CHECK(a[i].val_rank1 == b[i].val_rank1);
    }
    TrainConfig c = tiny_training();
    std::string log = metrics_log_header(c);
    for (const auto& e : a) log += metrics_log_line(e, c);
    CHECK(log.find("wall") == std::string::npos);
    CHECK(std::count(log.begin(), log.end(), '\n') == 4);
  }

  TEST_CASE("patience 1 with a constant metric stops after one idle epoch") {
    TrainConfig c = tiny_training();
    c.lr_main = c.lr_probe_transform = 0.0;
    c.patience = 1;
    c.max_epochs = 10;
    TrainerState s = start_training(init_model(conan::testing::small_config(), 15), c);
    const FitResult r = fit(ds, c, s);
    CHECK(r.history.size() == 2);
    CHECK(r.best_epoch == 1);
    CHECK(r.stopped_early);
  }

  TEST_CASE("resuming continues the same run") {
    TrainConfig c = tiny_training();
    c.max_epochs = 4;
    TrainerState whole = start_training(init_model(conan::testing::small_config(), 16), c);
    const FitResult full = fit(ds, c, whole);

    TrainConfig first = c;
    first.max_epochs = 2;
    TrainerState part = start_training(init_model(conan::testing::small_config(), 16), first);
    fit(ds, first, part);
    TrainerState copy = part;  // what a checkpoint would hold
    const FitResult resumed = fit(ds, c, copy);
    REQUIRE(resumed.history.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(resumed.history[i].loss == full.history[i].loss);
    CHECK(copy.model.params == whole.model.params);
    CHECK(copy.memory == whole.memory);
  }

  TEST_CASE("needs a validation split") {
    Dataset d = ds;
    std::erase_if(d.templates, [](const Template& t) { return t.split == Split::val; });
    TrainerState s = start_training(init_model(conan::testing::small_config(), 17), tiny_training());
    CHECK_THROWS_AS(fit(d, tiny_training(), s), DatasetError);
  }

  TEST_CASE("config checks") {
    TrainConfig c;
    c.patience = 0;
    CHECK_THROWS_AS(c.check(), ParameterError);
    c = TrainConfig{};
    c.tau = 0;
    CHECK_THROWS_AS(c.check(), ParameterError);
  }
}
