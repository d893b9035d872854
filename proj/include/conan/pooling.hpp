#pragma once

// Context-conditioned pooling: each embedding is scored by its cosine
// similarity to the template's context vector, the scores go through a
// temperature softmax, and the template collapses to the weighted sum of its
// embeddings. The pooled vector is not normalised here; matching normalises.

#include <optional>
#include <span>
#include <vector>

#include "conan/model.hpp"
#include "conan/template_model.hpp"

namespace conan {

// Per-embedding cosine similarity to the context vector. The scores are not
// averaged over the template: the softmax needs one score per embedding, and
// a common 1/N factor on every score is the same as using temperature N*T.
std::vector<double> similarities(std::span<const double> context, const Tensor& embeddings);

std::vector<double> softmax_weights(std::span<const double> sims, double temperature);

// Weighted sum of the rows; the weights must sum to 1 within 1e-8.
Tensor aggregate(const Tensor& embeddings, std::span<const double> weights);

struct AggregationResult {
  Tensor pooled;
  std::vector<double> weights;
  std::vector<double> similarities;
  Tensor context;
  double temperature = 0.0;
};

struct PooledVars {
  ad::Var pooled;        // d
  ad::Var weights;       // N
  ad::Var similarities;  // N
  ad::Var context;       // d
  ad::Var embeddings;    // N x d, after the probe transform
  const ContextVars* context_params = nullptr;
  std::vector<Tensor> attention_weights;
};

// Full pipeline on a tape: probe transform (probes only), statistics,
// token attention, summary, context network, similarities, softmax, pooling.
PooledVars pool_on_tape(const BoundModel& model, ad::Var embeddings, Distribution dist,
                        double temperature);

// Uses the model's configured temperature unless one is given.
AggregationResult aggregate_template(const Template& t, const Model& model,
                                     std::optional<double> temperature = std::nullopt);

}  // namespace conan
