#pragma once

// The context network maps a template summary to a d-dimensional context
// vector through three dense layers (rectifier after the first two). Probe
// and gallery templates go through the same weights. The optional probe
// transform is a per-embedding affine map, Y = S W + b, applied to probe
// templates before summarising and pooling.

#include "conan/model.hpp"
#include "conan/template_model.hpp"

namespace conan {

struct ContextMLPParams {
  Tensor w1, b1, w2, b2, w3, b3;
  static ContextMLPParams from(const Model& model);
};

struct ProbeTransformParams {
  Tensor weight, bias;
  static ProbeTransformParams from(const Model& model);
};

ad::Var context_vector(ad::Var summary, const ContextVars& params);
Tensor context_vector(const Tensor& summary, const ContextMLPParams& params);

ad::Var transform_probe(ad::Var embeddings, const ProbeTransformVars& params);
Tensor transform_probe(const Tensor& embeddings, const ProbeTransformParams& params);
// UsageError for gallery templates.
Tensor transform_probe(const Template& probe, const ProbeTransformParams& params);

}  // namespace conan
