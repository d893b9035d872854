#pragma once

// Multi-head scaled dot-product attention over a template with the
// distribution-type token prepended as row 0. Only the token's output row is
// consumed; there is no positional encoding, so the result does not depend
// on the order of the embeddings.

#include <vector>

#include "conan/model.hpp"
#include "conan/template_model.hpp"

namespace conan {

struct AttentionParams {
  Tensor query, key, value, output;  // d x d; head h owns columns [h*d/H, (h+1)*d/H)
  Tensor dte_probe, dte_gallery;     // d
  std::size_t heads = 4;

  static AttentionParams from(const Model& model);
  const Tensor& token(Distribution dist) const {
    return dist == Distribution::probe ? dte_probe : dte_gallery;
  }
};

struct TokenAttention {
  ad::Var token_output;              // d
  std::vector<Tensor> weights;       // per head, (N+1) x (N+1), rows sum to 1
};

// Per-head scores are scaled by 1/sqrt(d / heads).
TokenAttention attend_token(ad::Var embeddings, Distribution dist, const AttentionVars& params);

struct TokenAttentionResult {
  Tensor token_output;
  std::vector<Tensor> weights;
};

TokenAttentionResult attend_token(const Tensor& embeddings, Distribution dist,
                                  const AttentionParams& params);

}  // namespace conan
