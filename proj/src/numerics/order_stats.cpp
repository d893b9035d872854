#include "conan/numerics/order_stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "conan/errors.hpp"

namespace conan {
namespace {

ColumnPick single(double value, std::size_t row) {
  ColumnPick p;
  p.value = value;
  p.rows = {row, 0};
  p.coefs = {1.0, 0.0};
  p.terms = 1;
  return p;
}

void check(const Tensor& x, std::size_t col) {
  if (x.empty() || col >= x.cols()) throw DimensionError("column statistic out of range");
}

// Row indices sorted by (value, row).
std::vector<std::size_t> sorted_rows(const Tensor& x, std::size_t col) {
  std::vector<std::size_t> idx(x.rows());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return x.at(a, col) < x.at(b, col);
  });
  return idx;
}

}  // namespace

ColumnPick column_max(const Tensor& x, std::size_t col) {
  check(x, col);
  std::size_t best = 0;
  for (std::size_t r = 1; r < x.rows(); ++r)
    if (x.at(r, col) > x.at(best, col)) best = r;
  return single(x.at(best, col), best);
}

ColumnPick column_min(const Tensor& x, std::size_t col) {
  check(x, col);
  std::size_t best = 0;
  for (std::size_t r = 1; r < x.rows(); ++r)
    if (x.at(r, col) < x.at(best, col)) best = r;
  return single(x.at(best, col), best);
}

ColumnPick column_median(const Tensor& x, std::size_t col) {
  check(x, col);
  const std::size_t n = x.rows();
  const auto idx = sorted_rows(x, col);
  if (n % 2 == 1) return single(x.at(idx[n / 2], col), idx[n / 2]);
  const std::size_t lo = idx[n / 2 - 1];
  const std::size_t hi = idx[n / 2];
  ColumnPick p;
  p.value = 0.5 * (x.at(lo, col) + x.at(hi, col));
  p.rows = {lo, hi};
  p.coefs = {0.5, 0.5};
  p.terms = 2;
  return p;
}

ColumnPick column_mode(const Tensor& x, std::size_t col) {
  check(x, col);
  const std::size_t n = x.rows();
  if (n == 1) return single(x.at(0, col), 0);

  const auto idx = sorted_rows(x, col);
  std::size_t best_len = 1;
  std::size_t best_start = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && x.at(idx[j], col) == x.at(idx[i], col)) ++j;
    if (j - i > best_len) {
      best_len = j - i;
      best_start = i;
    }
    i = j;
  }
  if (best_len >= 2) {
    // Within a run of equal values the stable sort keeps rows ascending.
    return single(x.at(idx[best_start], col), idx[best_start]);
  }

  const std::size_t lo_row = idx.front();
  const std::size_t hi_row = idx.back();
  const double lo = x.at(lo_row, col);
  const double hi = x.at(hi_row, col);
  const double span = hi - lo;
  std::array<std::size_t, kModeBins> counts{};
  for (std::size_t r = 0; r < n; ++r) {
    const double t = (x.at(r, col) - lo) / span * static_cast<double>(kModeBins);
    std::size_t b = t <= 0.0 ? 0 : static_cast<std::size_t>(std::floor(t));
    counts[std::min(b, kModeBins - 1)]++;
  }
  const std::size_t bin = static_cast<std::size_t>(
      std::max_element(counts.begin(), counts.end()) - counts.begin());
  const double f = (static_cast<double>(bin) + 0.5) / static_cast<double>(kModeBins);
  ColumnPick p;
  p.value = (1.0 - f) * lo + f * hi;
  p.rows = {lo_row, hi_row};
  p.coefs = {1.0 - f, f};
  p.terms = 2;
  return p;
}

}  // namespace conan
