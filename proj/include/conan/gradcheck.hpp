#pragma once

// Finite-difference check of the whole training objective: a small batch of
// probe and gallery templates goes through the model and the contrastive
// loss, and every parameter entry is perturbed.

#include <cstdint>
#include <string>
#include <vector>

#include "conan/model.hpp"
#include "conan/numerics/fd_check.hpp"

namespace conan {

struct GradcheckCase {
  std::size_t d = 8;
  std::size_t n = 2;  // embeddings per template
  std::uint64_t seed = 0;
};

// Templates are tie-free per column (gap 1e-2) so max, min, mode and median
// are differentiable at the sample. The probe transform is moved off the
// identity. Widths are the defaults (4d, 2d) and heads = 4 when d allows.
FdReport gradcheck_full_loss(const GradcheckCase& c, const FdOptions& options = {});

// "8x1,16x5" -> {d, n} pairs; UsageError when malformed.
std::vector<std::pair<std::size_t, std::size_t>> parse_sizes(const std::string& text);

}  // namespace conan
