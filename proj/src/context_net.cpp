#include "conan/context_net.hpp"

#include "conan/errors.hpp"

namespace conan {

ContextMLPParams ContextMLPParams::from(const Model& model) {
  namespace pn = param_names;
  const auto& p = model.params;
  return {p.get(pn::kW1).value, p.get(pn::kB1).value, p.get(pn::kW2).value,
          p.get(pn::kB2).value, p.get(pn::kW3).value, p.get(pn::kB3).value};
}

ProbeTransformParams ProbeTransformParams::from(const Model& model) {
  namespace pn = param_names;
  return {model.params.get(pn::kProbeWeight).value, model.params.get(pn::kProbeBias).value};
}

ad::Var context_vector(ad::Var summary, const ContextVars& p) {
  const std::size_t len = summary.value().size();
  if (p.w1.value().rows() != len)
    throw DimensionError("summary has " + std::to_string(len) + " values, context network expects " +
                         std::to_string(p.w1.value().rows()));
  ad::Var h = ad::reshape(summary, {1, len});
  h = ad::relu(ad::add_row(ad::matmul(h, p.w1), p.b1));
  h = ad::relu(ad::add_row(ad::matmul(h, p.w2), p.b2));
  h = ad::add_row(ad::matmul(h, p.w3), p.b3);
  return ad::reshape(h, {h.value().size()});
}

Tensor context_vector(const Tensor& summary, const ContextMLPParams& p) {
  ad::Tape tape;
  const ContextVars vars{tape.constant(p.w1), tape.constant(p.b1), tape.constant(p.w2),
                         tape.constant(p.b2), tape.constant(p.w3), tape.constant(p.b3)};
  return context_vector(tape.constant(summary), vars).value();
}

ad::Var transform_probe(ad::Var embeddings, const ProbeTransformVars& p) {
  const std::size_t d = embeddings.value().cols();
  if (p.weight.value().shape() != Shape{d, d} || p.bias.value().size() != d)
    throw DimensionError("probe transform must be d x d with a d-vector bias");
  return ad::add_row(ad::matmul(embeddings, p.weight), p.bias);
}

Tensor transform_probe(const Tensor& embeddings, const ProbeTransformParams& p) {
  ad::Tape tape;
  const ProbeTransformVars vars{tape.constant(p.weight), tape.constant(p.bias)};
  return transform_probe(tape.constant(embeddings), vars).value();
}

Tensor transform_probe(const Template& probe, const ProbeTransformParams& p) {
  if (probe.distribution != Distribution::probe)
    throw UsageError("probe transform applied to gallery template '" + probe.id + "'");
  return transform_probe(probe.matrix(), p);
}

}  // namespace conan
