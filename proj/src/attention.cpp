#include "conan/attention.hpp"

#include <cmath>

#include "conan/errors.hpp"

namespace conan {

AttentionParams AttentionParams::from(const Model& model) {
  namespace pn = param_names;
  const auto& p = model.params;
  return {p.get(pn::kQuery).value,    p.get(pn::kKey).value,       p.get(pn::kValue).value,
          p.get(pn::kOutput).value,   p.get(pn::kDteProbe).value,  p.get(pn::kDteGallery).value,
          model.config.heads};
}

namespace {

void check_shapes(std::size_t d, std::size_t heads, const Tensor& q, const Tensor& k,
                  const Tensor& v, const Tensor& o, const Tensor& token) {
  const Shape sq{d, d};
  if (q.shape() != sq || k.shape() != sq || v.shape() != sq || o.shape() != sq)
    throw DimensionError("attention projections must be " + shape_string(sq));
  if (token.size() != d) throw DimensionError("attention token must have d entries");
  if (heads == 0 || d % heads != 0) throw DimensionError("head count must divide d");
}

}  // namespace

TokenAttention attend_token(ad::Var embeddings, Distribution dist, const AttentionVars& p) {
  const std::size_t d = embeddings.value().cols();
  const ad::Var dte = dist == Distribution::probe ? p.dte_probe : p.dte_gallery;
  check_shapes(d, p.heads, p.query.value(), p.key.value(), p.value.value(), p.output.value(),
               dte.value());
  if (embeddings.value().rank() != 2) throw DimensionError("attend_token expects an N x d matrix");

  const std::vector<ad::Var> rows{ad::reshape(dte, {1, d}), embeddings};
  const ad::Var all = ad::concat_rows(rows);
  const ad::Var q = ad::matmul(all, p.query);
  const ad::Var k = ad::matmul(all, p.key);
  const ad::Var v = ad::matmul(all, p.value);

  const std::size_t width = d / p.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(width));
  TokenAttention out;
  std::vector<ad::Var> heads;
  for (std::size_t h = 0; h < p.heads; ++h) {
    const ad::Var qh = ad::slice_cols(q, h * width, width);
    const ad::Var kh = ad::slice_cols(k, h * width, width);
    const ad::Var vh = ad::slice_cols(v, h * width, width);
    const ad::Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), scale);
    const ad::Var beta = ad::softmax_rows(scores, 1.0);
    out.weights.push_back(beta.value());
    heads.push_back(ad::matmul(beta, vh));
  }
  const ad::Var joined = heads.size() == 1 ? heads.front() : ad::concat_cols(heads);
  out.token_output = ad::slice_row(ad::matmul(joined, p.output), 0);
  return out;
}

TokenAttentionResult attend_token(const Tensor& embeddings, Distribution dist,
                                  const AttentionParams& params) {
  ad::Tape tape;
  const AttentionVars vars{tape.constant(params.query),     tape.constant(params.key),
                           tape.constant(params.value),     tape.constant(params.output),
                           tape.constant(params.dte_probe), tape.constant(params.dte_gallery),
                           params.heads};
  TokenAttention r = attend_token(tape.constant(embeddings), dist, vars);
  return {r.token_output.value(), std::move(r.weights)};
}

}  // namespace conan
