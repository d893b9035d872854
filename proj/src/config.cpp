#include "conan/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdlib>
#include <functional>
#include <map>

#include "conan/errors.hpp"
#include "conan/io_format.hpp"

namespace conan {

RunConfig::RunConfig() {
  model.d = synth.d;
  train.log_wall_time = false;  // byte-identical logs by default
}

namespace {

struct Key {
  std::string name;
  std::function<void(RunConfig&, const YAML::Node&)> set;
  std::function<void(YAML::Emitter&, const RunConfig&)> emit;
};

template <typename T, typename Get>
Key field(std::string name, Get get) {
  return Key{
      std::move(name),
      [get](RunConfig& c, const YAML::Node& n) { get(c) = n.as<T>(); },
      [get](YAML::Emitter& e, const RunConfig& c) { e << get(const_cast<RunConfig&>(c)); }};
}

using Range = std::array<std::size_t, 2>;

Range as_range(const YAML::Node& n) {
  const auto v = n.as<std::vector<std::size_t>>();
  if (v.size() != 2) throw YAML::Exception(n.Mark(), "expected two values");
  return {v[0], v[1]};
}

template <typename Get>
Key range_field(std::string name, Get get) {
  return Key{std::move(name), [get](RunConfig& c, const YAML::Node& n) { get(c) = as_range(n); },
             [get](YAML::Emitter& e, const RunConfig& c) {
               const Range& r = get(const_cast<RunConfig&>(c));
               e << YAML::Flow << std::vector<std::size_t>{r[0], r[1]};
             }};
}

const std::vector<Key>& keys() {
#define CONAN_FIELD(T, path, expr) field<T>(path, [](RunConfig& c) -> auto& { return expr; })
  static const std::vector<Key> k = {
      CONAN_FIELD(std::size_t, "synth.n_subjects", c.synth.n_subjects),
      CONAN_FIELD(std::size_t, "synth.n_train_subjects", c.synth.n_train_subjects),
      CONAN_FIELD(std::size_t, "synth.n_val_subjects", c.synth.n_val_subjects),
      CONAN_FIELD(std::size_t, "synth.d", c.synth.d),
      CONAN_FIELD(std::size_t, "synth.gallery_templates", c.synth.gallery_templates),
      CONAN_FIELD(std::size_t, "synth.probe_templates", c.synth.probe_templates),
      range_field("synth.gallery_size", [](RunConfig& c) -> auto& { return c.synth.gallery_size; }),
      range_field("synth.probe_size", [](RunConfig& c) -> auto& { return c.synth.probe_size; }),
      CONAN_FIELD(double, "synth.sigma_g", c.synth.sigma_g),
      CONAN_FIELD(double, "synth.sigma_p", c.synth.sigma_p),
      CONAN_FIELD(double, "synth.rho", c.synth.rho),
      CONAN_FIELD(double, "synth.theta_deg", c.synth.theta_deg),
      CONAN_FIELD(std::size_t, "synth.junk_centers", c.synth.junk_centers),
      CONAN_FIELD(double, "synth.junk_spread", c.synth.junk_spread),
      CONAN_FIELD(std::uint64_t, "synth.seed", c.synth.seed),

      CONAN_FIELD(std::size_t, "model.heads", c.model.heads),
      range_field("model.hidden", [](RunConfig& c) -> auto& { return c.model.hidden; }),
      Key{"model.summary_blocks",
          [](RunConfig& c, const YAML::Node& n) {
            c.model.layout = n.IsScalar() ? SummaryLayout::preset(n.as<std::string>())
                                          : SummaryLayout::from_names(n.as<std::vector<std::string>>());
          },
          [](YAML::Emitter& e, const RunConfig& c) { e << YAML::Flow << c.model.layout.names(); }},
      CONAN_FIELD(bool, "model.probe_transform", c.model.probe_transform),
      CONAN_FIELD(double, "model.softmax_temperature", c.model.softmax_temperature),
      CONAN_FIELD(std::uint64_t, "model.init_seed", c.model_init_seed),

      CONAN_FIELD(double, "train.tau", c.train.tau),
      CONAN_FIELD(double, "train.lr_main", c.train.lr_main),
      CONAN_FIELD(double, "train.lr_probe_transform", c.train.lr_probe_transform),
      CONAN_FIELD(double, "train.beta1", c.train.beta1),
      CONAN_FIELD(double, "train.beta2", c.train.beta2),
      CONAN_FIELD(double, "train.eps", c.train.eps),
      CONAN_FIELD(std::size_t, "train.subjects_per_batch", c.train.subjects_per_batch),
      CONAN_FIELD(std::size_t, "train.templates_per_subject", c.train.templates_per_subject),
      range_field("train.subsample", [](RunConfig& c) -> auto& { return c.train.subsample; }),
      CONAN_FIELD(std::size_t, "train.memory_capacity", c.train.memory_capacity),
      CONAN_FIELD(bool, "train.gallery_anchors", c.train.gallery_anchors),
      CONAN_FIELD(std::size_t, "train.max_epochs", c.train.max_epochs),
      CONAN_FIELD(std::size_t, "train.patience", c.train.patience),
      CONAN_FIELD(std::uint64_t, "train.seed", c.train.seed),
      CONAN_FIELD(bool, "train.log_wall_time", c.train.log_wall_time),

      CONAN_FIELD(unsigned, "threads", c.threads),
  };
#undef CONAN_FIELD
  return k;
}

const Key* find_key(const std::string& name) {
  for (const Key& k : keys())
    if (k.name == name) return &k;
  return nullptr;
}

// Applies one value; the caller decides which error class a failure becomes.
template <typename E>
void assign(RunConfig& c, const std::string& name, const YAML::Node& value) {
  const Key* k = find_key(name);
  if (k == nullptr) throw E("unknown configuration key '" + name + "'");
  try {
    k->set(c, value);
  } catch (const YAML::Exception&) {
    throw E("bad value for '" + name + "'");
  } catch (const SchemaError& e) {
    throw E("bad value for '" + name + "': " + e.what());
  } catch (const UsageError& e) {
    throw E("bad value for '" + name + "': " + e.what());
  }
}

void walk(RunConfig& c, const YAML::Node& node, const std::string& prefix) {
  for (const auto& kv : node) {
    const std::string name = prefix + kv.first.as<std::string>();
    if (kv.second.IsMap())
      walk(c, kv.second, name + ".");
    else
      assign<SchemaError>(c, name, kv.second);
  }
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Key& k : keys()) out.push_back(k.name);
  return out;
}

void apply_yaml(RunConfig& config, const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw SchemaError(std::string("config is not valid YAML: ") + e.what());
  }
  if (root.IsNull()) return;
  if (!root.IsMap()) throw SchemaError("config must be a mapping");
  walk(config, root, "");
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("override '" + assignment + "' is not key=value");
  const std::string name = assignment.substr(0, eq);
  YAML::Node value;
  try {
    value = YAML::Load(assignment.substr(eq + 1));
  } catch (const YAML::Exception&) {
    throw UsageError("cannot read the value of '" + name + "'");
  }
  assign<UsageError>(config, name, value);
}

void apply_seed(RunConfig& config, std::uint64_t seed) {
  config.synth.seed = seed;
  config.model_init_seed = seed;
  config.train.seed = seed;
}

std::string to_yaml(const RunConfig& config) {
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << YAML::BeginMap;
  std::string section;
  for (const Key& k : keys()) {
    const auto dot = k.name.find('.');
    const std::string sec = dot == std::string::npos ? "" : k.name.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) e << YAML::EndMap;
      if (!sec.empty()) e << YAML::Key << sec << YAML::Value << YAML::BeginMap;
      section = sec;
    }
    e << YAML::Key << (dot == std::string::npos ? k.name : k.name.substr(dot + 1)) << YAML::Value;
    k.emit(e, config);
  }
  if (!section.empty()) e << YAML::EndMap;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

std::optional<std::filesystem::path> resolve_config_path(const std::optional<std::string>& path) {
  namespace fs = std::filesystem;
  const char* env = std::getenv("CONAN_CONFIG_DIR");
  if (!path) {
    if (env != nullptr && fs::exists(fs::path(env) / "default.yaml")) return fs::path(env) / "default.yaml";
    return std::nullopt;
  }
  const fs::path p(*path);
  if (fs::exists(p)) return p;
  if (p.is_relative() && env != nullptr && fs::exists(fs::path(env) / p)) return fs::path(env) / p;
  throw IoError("config file '" + *path + "' not found");
}

RunConfig load_run_config(const std::optional<std::string>& path, const std::vector<std::string>& overrides) {
  RunConfig c;
  if (const auto p = resolve_config_path(path)) {
    const auto bytes = io::read_file(*p);
    apply_yaml(c, std::string(bytes.begin(), bytes.end()));
  }
  for (const auto& o : overrides) apply_override(c, o);
  return c;
}

void check(const RunConfig& config) {
  config.synth.check();
  ModelConfig m = config.model;
  m.d = config.synth.d;
  m.check();
  config.train.check();
  if (config.threads == 0) throw ParameterError("threads must be at least 1");
}

}  // namespace conan
