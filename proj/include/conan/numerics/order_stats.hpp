#pragma once

// Per-column order statistics shared by the summary statistics and their
// differentiable counterparts. Each pick reports its value together with the
// rows that value is a linear function of, so the backward pass can route
// gradient without re-deriving the selection.

#include <array>
#include <cstddef>

#include "conan/numerics/tensor.hpp"

namespace conan {

inline constexpr std::size_t kModeBins = 16;

struct ColumnPick {
  double value = 0.0;
  std::array<std::size_t, 2> rows{};
  std::array<double, 2> coefs{};
  std::size_t terms = 0;
};

ColumnPick column_max(const Tensor& x, std::size_t col);
ColumnPick column_min(const Tensor& x, std::size_t col);
// Midpoint of the two central order statistics for even N.
ColumnPick column_median(const Tensor& x, std::size_t col);
// Most frequent exactly-repeated value (lowest value on ties) if any value
// repeats; otherwise the centre of the densest of kModeBins equal-width bins
// over [min, max] (lowest bin on ties). The histogram centre is
// min + f * (max - min) with f fixed by the bin index, so it varies linearly
// with the min and max entries.
ColumnPick column_mode(const Tensor& x, std::size_t col);

}  // namespace conan
