#include "conan/model.hpp"

#include <cmath>
#include <random>

#include "conan/errors.hpp"

namespace conan {

void ModelConfig::check() const {
  if (d == 0) throw ParameterError("model dimension must be positive");
  if (heads == 0 || d % heads != 0)
    throw ParameterError("head count " + std::to_string(heads) + " does not divide d = " +
                         std::to_string(d));
  if (!(softmax_temperature > 0.0)) throw ParameterError("softmax temperature must be positive");
}

std::string_view to_string(ParamGroup g) {
  return g == ParamGroup::main ? "main" : "probe_transform";
}

Parameter& ModelParams::add(std::string name, Tensor value, ParamGroup group) {
  if (find(name) != nullptr) throw SchemaError("duplicate parameter '" + name + "'");
  params_.push_back(Parameter{std::move(name), std::move(value), group});
  return params_.back();
}

const Parameter* ModelParams::find(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

const Parameter& ModelParams::get(std::string_view name) const {
  if (const Parameter* p = find(name)) return *p;
  throw SchemaError("missing parameter '" + std::string(name) + "'");
}

Parameter& ModelParams::get(std::string_view name) {
  return const_cast<Parameter&>(static_cast<const ModelParams&>(*this).get(name));
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

namespace {

Tensor normal(std::mt19937_64& rng, Shape shape, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(std::move(shape));
  for (double& x : t.values()) x = dist(rng);
  return t;
}

}  // namespace

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  config.check();
  namespace pn = param_names;
  std::mt19937_64 rng(seed);
  Model m{config, {}};
  const std::size_t d = config.d;
  const double proj = 1.0 / std::sqrt(static_cast<double>(d));

  if (config.layout.uses_attention()) {
    m.params.add(pn::kDteProbe, normal(rng, {d}, 0.02), ParamGroup::main);
    m.params.add(pn::kDteGallery, normal(rng, {d}, 0.02), ParamGroup::main);
    m.params.add(pn::kQuery, normal(rng, {d, d}, proj), ParamGroup::main);
    m.params.add(pn::kKey, normal(rng, {d, d}, proj), ParamGroup::main);
    m.params.add(pn::kValue, normal(rng, {d, d}, proj), ParamGroup::main);
    m.params.add(pn::kOutput, normal(rng, {d, d}, proj), ParamGroup::main);
  }

  const std::size_t widths[4] = {config.summary_length(), config.hidden1(), config.hidden2(), d};
  const char* weights[3] = {pn::kW1, pn::kW2, pn::kW3};
  const char* biases[3] = {pn::kB1, pn::kB2, pn::kB3};
  for (int layer = 0; layer < 3; ++layer) {
    const std::size_t fan_in = widths[layer], fan_out = widths[layer + 1];
    m.params.add(weights[layer],
                 normal(rng, {fan_in, fan_out}, 1.0 / std::sqrt(static_cast<double>(fan_in))),
                 ParamGroup::main);
    m.params.add(biases[layer], Tensor({fan_out}, 0.0), ParamGroup::main);
  }

  if (config.probe_transform) {
    m.params.add(pn::kProbeWeight, Tensor::identity(d), ParamGroup::probe_transform);
    m.params.add(pn::kProbeBias, Tensor({d}, 0.0), ParamGroup::probe_transform);
  }
  return m;
}

std::vector<ParamSpec> param_specs(const ModelConfig& config) {
  config.check();
  namespace pn = param_names;
  const std::size_t d = config.d;
  std::vector<ParamSpec> out;
  if (config.layout.uses_attention()) {
    out.push_back({pn::kDteProbe, {d}, ParamGroup::main});
    out.push_back({pn::kDteGallery, {d}, ParamGroup::main});
    for (const char* n : {pn::kQuery, pn::kKey, pn::kValue, pn::kOutput}) out.push_back({n, {d, d}, ParamGroup::main});
  }
  const std::size_t widths[4] = {config.summary_length(), config.hidden1(), config.hidden2(), d};
  const char* weights[3] = {pn::kW1, pn::kW2, pn::kW3};
  const char* biases[3] = {pn::kB1, pn::kB2, pn::kB3};
  for (int layer = 0; layer < 3; ++layer) {
    out.push_back({weights[layer], {widths[layer], widths[layer + 1]}, ParamGroup::main});
    out.push_back({biases[layer], {widths[layer + 1]}, ParamGroup::main});
  }
  if (config.probe_transform) {
    out.push_back({pn::kProbeWeight, {d, d}, ParamGroup::probe_transform});
    out.push_back({pn::kProbeBias, {d}, ParamGroup::probe_transform});
  }
  return out;
}

BoundModel bind(ad::Tape& tape, const Model& model, bool track_gradients) {
  std::vector<ad::Var> vars;
  for (const auto& p : model.params.all())
    vars.push_back(track_gradients ? tape.leaf(p.value) : tape.constant(p.value));
  return bind_vars(model, std::move(vars));
}

BoundModel bind_vars(const Model& model, std::vector<ad::Var> vars) {
  namespace pn = param_names;
  if (vars.size() != model.params.size())
    throw DimensionError(std::to_string(vars.size()) + " variables for " +
                         std::to_string(model.params.size()) + " parameters");
  BoundModel b;
  b.config = &model.config;
  b.vars = std::move(vars);

  auto var = [&](const char* name) -> ad::Var {
    const auto& all = model.params.all();
    for (std::size_t i = 0; i < all.size(); ++i)
      if (all[i].name == name) return b.vars[i];
    throw SchemaError(std::string("missing parameter '") + name + "'");
  };

  if (model.config.layout.uses_attention()) {
    b.attention = AttentionVars{var(pn::kQuery),    var(pn::kKey),        var(pn::kValue),
                                var(pn::kOutput),   var(pn::kDteProbe),   var(pn::kDteGallery),
                                model.config.heads};
  }
  b.context = ContextVars{var(pn::kW1), var(pn::kB1), var(pn::kW2),
                          var(pn::kB2), var(pn::kW3), var(pn::kB3)};
  if (model.config.probe_transform)
    b.probe = ProbeTransformVars{var(pn::kProbeWeight), var(pn::kProbeBias)};
  return b;
}

}  // namespace conan
