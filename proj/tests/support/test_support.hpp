#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "conan/numerics/tensor.hpp"

namespace conan::testing {

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Tensor t(std::move(shape));
  for (double& x : t.values()) x = dist(rng);
  return t;
}

// Random matrix whose entries in every column are pairwise at least `gap`
// apart, so order statistics have no ties.
inline Tensor tie_free_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                              double gap = 1e-3) {
  Tensor t({rows, cols});
  std::normal_distribution<double> dist(0.0, 1.0);
  for (std::size_t c = 0; c < cols; ++c) {
    for (;;) {
      std::vector<double> v(rows);
      for (double& x : v) x = dist(rng);
      std::vector<double> s = v;
      std::sort(s.begin(), s.end());
      bool ok = true;
      for (std::size_t i = 1; i < s.size(); ++i) ok = ok && (s[i] - s[i - 1] >= gap);
      if (!ok) continue;
      for (std::size_t r = 0; r < rows; ++r) t.at(r, c) = v[r];
      break;
    }
  }
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0.0L;
      for (std::size_t k = 0; k < a.cols(); ++k)
        s += static_cast<long double>(a.at(i, k)) * b.at(k, j);
      c.at(i, j) = static_cast<double>(s);
    }
  return c;
}

}  // namespace conan::testing
