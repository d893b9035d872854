#include "conan/pooling.hpp"

#include <algorithm>
#include <cmath>

#include "conan/attention.hpp"
#include "conan/context_net.hpp"
#include "conan/errors.hpp"
#include "conan/summarizer.hpp"

namespace conan {

std::vector<double> similarities(std::span<const double> context, const Tensor& embeddings) {
  if (context.size() != embeddings.cols())
    throw DimensionError("context has " + std::to_string(context.size()) +
                         " values, embeddings have " + std::to_string(embeddings.cols()));
  std::vector<double> out(embeddings.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cosine_similarity(context, embeddings.row(i));
  return out;
}

std::vector<double> softmax_weights(std::span<const double> sims, double temperature) {
  return softmax(sims, temperature);
}

Tensor aggregate(const Tensor& embeddings, std::span<const double> weights) {
  if (weights.size() != embeddings.rows())
    throw DimensionError(std::to_string(weights.size()) + " weights for " +
                         std::to_string(embeddings.rows()) + " embeddings");
  double total = 0.0;
  for (double w : weights) total += w;
  if (std::abs(total - 1.0) > 1e-8) throw ParameterError("aggregation weights do not sum to 1");
  Tensor out({embeddings.cols()}, 0.0);
  for (std::size_t i = 0; i < weights.size(); ++i)
    for (std::size_t j = 0; j < embeddings.cols(); ++j) out[j] += weights[i] * embeddings.at(i, j);
  return out;
}

PooledVars pool_on_tape(const BoundModel& model, ad::Var embeddings, Distribution dist,
                        double temperature) {
  if (!(temperature > 0.0)) throw ParameterError("softmax temperature must be positive");
  const ModelConfig& cfg = *model.config;
  if (embeddings.value().rank() != 2 || embeddings.value().cols() != cfg.d)
    throw DimensionError("template embeddings must be N x " + std::to_string(cfg.d));

  PooledVars out;
  out.context_params = &model.context;
  ad::Var x = embeddings;
  if (dist == Distribution::probe && model.probe) x = transform_probe(x, *model.probe);
  out.embeddings = x;

  const StatsVars stats = compute_stats(x);
  ad::Var token_output, dte;
  if (cfg.layout.uses_attention()) {
    const AttentionVars& att = *model.attention;
    TokenAttention r = attend_token(x, dist, att);
    token_output = r.token_output;
    dte = dist == Distribution::probe ? att.dte_probe : att.dte_gallery;
    out.attention_weights = std::move(r.weights);
  }
  const ad::Var summary = assemble_summary(stats, token_output, dte, cfg.layout);
  out.context = context_vector(summary, model.context);

  const std::size_t n = x.value().rows(), d = cfg.d;
  if (!(l2_norm(out.context.value().values()) > 0.0))
    throw DegenerateInputError("context vector has zero norm");
  const ad::Var unit_context = ad::reshape(ad::l2_normalize_rows(out.context), {d, 1});
  out.similarities = ad::reshape(ad::matmul(ad::l2_normalize_rows(x), unit_context), {n});
  out.weights = ad::reshape(ad::softmax_rows(out.similarities, temperature), {n});
  out.pooled = ad::reshape(ad::matmul(ad::reshape(out.weights, {1, n}), x), {d});
  return out;
}

AggregationResult aggregate_template(const Template& t, const Model& model,
                                     std::optional<double> temperature) {
  const double temp = temperature.value_or(model.config.softmax_temperature);
  ad::Tape tape;
  const BoundModel bound = bind(tape, model, false);
  const PooledVars p = pool_on_tape(bound, tape.constant(t.matrix()), t.distribution, temp);

  AggregationResult r;
  r.pooled = p.pooled.value();
  r.weights.assign(p.weights.value().values().begin(), p.weights.value().values().end());
  r.similarities.reserve(t.size());
  for (double s : p.similarities.value().values()) r.similarities.push_back(std::clamp(s, -1.0, 1.0));
  r.context = p.context.value();
  r.temperature = temp;
  return r;
}

}  // namespace conan
