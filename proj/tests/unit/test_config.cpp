#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "conan/config.hpp"
#include "conan/errors.hpp"

using namespace conan;
namespace fs = std::filesystem;

TEST_SUITE("config") {
  TEST_CASE("defaults match the benchmark") {
    const RunConfig c;
    CHECK(c.synth.n_subjects == 50);
    CHECK(c.synth.d == 64);
    CHECK(c.synth.sigma_p == 0.5);
    CHECK(c.synth.rho == 0.4);
    CHECK(c.synth.theta_deg == 30.0);
    CHECK(c.train.tau == 0.1);
    CHECK(c.threads == 1);
    CHECK(!c.train.log_wall_time);
    CHECK_NOTHROW(check(c));
  }

  TEST_CASE("file then overrides, last one wins") {
    RunConfig c;
    apply_yaml(c, "synth:\n  rho: 0.2\n  probe_size: [3, 5]\ntrain:\n  lr_main: 0.5\nthreads: 3\n");
    CHECK(c.synth.rho == 0.2);
    CHECK(c.synth.probe_size == std::array<std::size_t, 2>{3, 5});
    CHECK(c.train.lr_main == 0.5);
    CHECK(c.threads == 3);
    apply_override(c, "synth.rho=0.3");
    apply_override(c, "model.summary_blocks=mean+var");
    apply_override(c, "train.gallery_anchors=false");
    CHECK(c.synth.rho == 0.3);
    CHECK(c.model.layout == SummaryLayout::preset("mean+var"));
    CHECK(!c.train.gallery_anchors);
    apply_override(c, "model.summary_blocks=[C, mean]");
    CHECK(c.model.layout.names() == std::vector<std::string>{"C", "mean"});
  }

  TEST_CASE("unknown keys are rejected, not ignored") {
    RunConfig c;
    CHECK_THROWS_AS(apply_yaml(c, "synth:\n  rhoo: 0.2\n"), SchemaError);
    CHECK_THROWS_AS(apply_yaml(c, "extra: 1\n"), SchemaError);
    CHECK_THROWS_AS(apply_yaml(c, "synth:\n  rho: [1, 2]\n"), SchemaError);
    CHECK_THROWS_AS(apply_override(c, "train.lr=1"), UsageError);
    CHECK_THROWS_AS(apply_override(c, "train.lr_main"), UsageError);
    CHECK_THROWS_AS(apply_override(c, "train.lr_main=fast"), UsageError);
    CHECK_THROWS_AS(apply_override(c, "model.summary_blocks=[mean, max]"), UsageError);
    CHECK_THROWS_AS(apply_override(c, "model.summary_blocks=everything"), UsageError);
  }

  TEST_CASE("effective config round trips") {
    RunConfig c;
    apply_override(c, "synth.sigma_p=0.123456789012345");
    apply_override(c, "model.hidden=[7, 5]");
    apply_seed(c, 42);
    const std::string text = to_yaml(c);
    RunConfig back;
    apply_yaml(back, text);
    CHECK(to_yaml(back) == text);
    CHECK(back.synth.sigma_p == 0.123456789012345);
    CHECK(back.synth.seed == 42);
    CHECK(back.train.seed == 42);
    CHECK(back.model_init_seed == 42);
    for (const auto& k : config_keys()) {
      const auto dot = k.find('.');
      CHECK(text.find(dot == std::string::npos ? k : k.substr(dot + 1)) != std::string::npos);
    }
  }

  TEST_CASE("config directory from the environment") {
    const fs::path dir = fs::temp_directory_path() / "conan_config_test";
    fs::create_directories(dir);
    std::ofstream(dir / "default.yaml") << "synth:\n  n_subjects: 7\n";
    std::ofstream(dir / "other.yaml") << "synth:\n  n_subjects: 9\n";
    ::setenv("CONAN_CONFIG_DIR", dir.c_str(), 1);
    CHECK(load_run_config(std::nullopt, {}).synth.n_subjects == 7);
    CHECK(load_run_config(std::string("other.yaml"), {}).synth.n_subjects == 9);
    CHECK(load_run_config(std::string("other.yaml"), {"synth.n_subjects=11"}).synth.n_subjects == 11);
    CHECK_THROWS_AS(load_run_config(std::string("missing.yaml"), {}), IoError);
    ::unsetenv("CONAN_CONFIG_DIR");
    CHECK(load_run_config(std::nullopt, {}).synth.n_subjects == 50);
  }

  TEST_CASE("range checks") {
    RunConfig c;
    c.model.heads = 5;
    CHECK_THROWS_AS(check(c), ParameterError);
    c = RunConfig{};
    c.threads = 0;
    CHECK_THROWS_AS(check(c), ParameterError);
  }
}
