#pragma once

// Layered run configuration: built-in defaults, then a YAML file, then
// dotted-key overrides from the command line. Unknown keys are errors.
//
//   synth:  n_subjects n_train_subjects n_val_subjects d gallery_templates
//           probe_templates gallery_size probe_size sigma_g sigma_p rho
//           theta_deg junk_centers junk_spread seed
//   model:  heads hidden summary_blocks probe_transform softmax_temperature
//           init_seed
//   train:  tau lr_main lr_probe_transform beta1 beta2 eps subjects_per_batch
//           templates_per_subject subsample memory_capacity gallery_anchors
//           max_epochs patience seed log_wall_time
//   threads
//
// The model dimension is not configurable; it always comes from the dataset.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "conan/datagen.hpp"
#include "conan/model.hpp"
#include "conan/trainer.hpp"

namespace conan {

struct RunConfig {
  SynthConfig synth;
  ModelConfig model;  // d is filled in from the dataset
  std::uint64_t model_init_seed = 0;
  TrainConfig train;
  unsigned threads = 1;

  RunConfig();
};

// Every dotted key, in emission order.
std::vector<std::string> config_keys();

// SchemaError on unknown keys or values of the wrong type.
void apply_yaml(RunConfig& config, const std::string& yaml_text);
// "section.key=value"; the value is read as YAML ("[4, 8]", "true", "0.5").
// UsageError for malformed or unknown keys.
void apply_override(RunConfig& config, const std::string& assignment);
// Sets synth, model and train seeds together.
void apply_seed(RunConfig& config, std::uint64_t seed);

// Effective configuration, parseable by apply_yaml.
std::string to_yaml(const RunConfig& config);

// Resolves a config path. Relative paths that do not exist are looked up in
// $CONAN_CONFIG_DIR. Without a path, $CONAN_CONFIG_DIR/default.yaml is used
// if present. IoError when an explicit path cannot be found.
std::optional<std::filesystem::path> resolve_config_path(const std::optional<std::string>& path);

// Defaults, then the resolved file (if any), then overrides in order.
RunConfig load_run_config(const std::optional<std::string>& path, const std::vector<std::string>& overrides);

// Range checks of every section (ParameterError).
void check(const RunConfig& config);

}  // namespace conan
