#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "conan/numerics/autodiff.hpp"
#include "conan/summarizer.hpp"

namespace conan {

struct ModelConfig {
  std::size_t d = 512;
  std::size_t heads = 4;
  // Context network hidden widths; zero means the default 4d and 2d.
  std::array<std::size_t, 2> hidden{0, 0};
  SummaryLayout layout = SummaryLayout::full();
  bool probe_transform = true;
  double softmax_temperature = 0.1;

  std::size_t hidden1() const { return hidden[0] ? hidden[0] : 4 * d; }
  std::size_t hidden2() const { return hidden[1] ? hidden[1] : 2 * d; }
  std::size_t summary_length() const { return layout.count() * d; }
  // Throws ParameterError on a non-positive d or temperature, or a head count
  // that does not divide d.
  void check() const;
};

// Learning-rate groups: the probe transform trains on its own rate.
enum class ParamGroup { main, probe_transform };

std::string_view to_string(ParamGroup g);

struct Parameter {
  std::string name;
  Tensor value;
  ParamGroup group = ParamGroup::main;
  friend bool operator==(const Parameter&, const Parameter&) = default;
};

// Ordered set of named tensors. Order is creation order and is what
// checkpoints and optimiser state follow.
class ModelParams {
 public:
  Parameter& add(std::string name, Tensor value, ParamGroup group);
  const Parameter& get(std::string_view name) const;
  Parameter& get(std::string_view name);
  const Parameter* find(std::string_view name) const;

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  std::vector<Parameter> params_;
};

struct Model {
  ModelConfig config;
  ModelParams params;
};

namespace param_names {
inline constexpr const char* kDteProbe = "attention.dte_probe";
inline constexpr const char* kDteGallery = "attention.dte_gallery";
inline constexpr const char* kQuery = "attention.query";
inline constexpr const char* kKey = "attention.key";
inline constexpr const char* kValue = "attention.value";
inline constexpr const char* kOutput = "attention.output";
inline constexpr const char* kW1 = "context.w1";
inline constexpr const char* kB1 = "context.b1";
inline constexpr const char* kW2 = "context.w2";
inline constexpr const char* kB2 = "context.b2";
inline constexpr const char* kW3 = "context.w3";
inline constexpr const char* kB3 = "context.b3";
inline constexpr const char* kProbeWeight = "probe.weight";
inline constexpr const char* kProbeBias = "probe.bias";
}  // namespace param_names

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamGroup group = ParamGroup::main;
};

// Names, shapes and groups init_model creates for a configuration, in order.
std::vector<ParamSpec> param_specs(const ModelConfig& config);

// Seeded initialisation: attention projections N(0, 1/d), DTE tokens
// N(0, 0.02^2), context layers N(0, 1/fan_in) with zero biases, probe
// transform identity with zero bias.
Model init_model(const ModelConfig& config, std::uint64_t seed);

// --- parameters bound to a tape -------------------------------------------

struct AttentionVars {
  ad::Var query, key, value, output;
  ad::Var dte_probe, dte_gallery;
  std::size_t heads = 1;
};

struct ContextVars {
  ad::Var w1, b1, w2, b2, w3, b3;
};

struct ProbeTransformVars {
  ad::Var weight, bias;
};

struct BoundModel {
  const ModelConfig* config = nullptr;
  std::optional<AttentionVars> attention;
  ContextVars context;
  std::optional<ProbeTransformVars> probe;
  // One leaf or constant per parameter, in ModelParams order.
  std::vector<ad::Var> vars;
};

// Binds every parameter onto the tape, as leaves when gradients are wanted.
BoundModel bind(ad::Tape& tape, const Model& model, bool track_gradients);

// Same wiring over variables the caller already put on a tape, one per
// parameter in ModelParams order.
BoundModel bind_vars(const Model& model, std::vector<ad::Var> vars);

}  // namespace conan
