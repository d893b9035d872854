#pragma once

// Brute-force reference implementations. They share nothing with the library
// beyond the Tensor container: explicit loops, sorted copies, pair enumeration
// and long double where it helps.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "conan/attention.hpp"
#include "conan/supcon_loss.hpp"

namespace conan::testing {

// Token output of multi-head attention as loops over rows, heads and pairs,
// with `token` standing in for the distribution's DTE row.
inline Tensor attention_oracle(const Tensor& embeddings, const Tensor& token, const AttentionParams& p) {
  const std::size_t d = embeddings.cols();
  const std::size_t n = embeddings.rows() + 1;

  auto input = [&](std::size_t i, std::size_t c) {
    return i == 0 ? token[c] : embeddings.at(i - 1, c);
  };
  auto project = [&](const Tensor& w, std::size_t i, std::size_t col) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += input(i, c) * w.at(c, col);
    return s;
  };

  const std::size_t width = d / p.heads;
  std::vector<double> joined(d, 0.0);  // concatenated head outputs for row 0
  for (std::size_t h = 0; h < p.heads; ++h) {
    std::vector<double> scores(n);
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < width; ++c)
        s += project(p.query, 0, h * width + c) * project(p.key, j, h * width + c);
      scores[j] = s / std::sqrt(static_cast<double>(width));
    }
    double mx = scores[0];
    for (double s : scores) mx = std::max(mx, s);
    double z = 0.0;
    for (double& s : scores) z += (s = std::exp(s - mx));
    for (std::size_t c = 0; c < width; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += scores[j] / z * project(p.value, j, h * width + c);
      joined[h * width + c] = acc;
    }
  }
  Tensor out({d}, 0.0);
  for (std::size_t col = 0; col < d; ++col)
    for (std::size_t c = 0; c < d; ++c) out[col] += joined[c] * p.output.at(c, col);
  return out;
}


// Column statistics computed from a sorted copy; mode by counting.
struct OracleStats {
  std::vector<double> max, min, mean, var, mode, median;
};

inline double oracle_mode(std::vector<double> v) {
  std::map<double, int> freq;
  for (double x : v) freq[x]++;
  int best = 0;
  double arg = 0.0;
  for (auto [x, c] : freq)
    if (c > best) best = c, arg = x;
  if (best > 1 || v.size() == 1) return arg;
  const double lo = *std::min_element(v.begin(), v.end());
  const double hi = *std::max_element(v.begin(), v.end());
  // Try each bin's centre and count the values within half a bin width.
  const double w = (hi - lo) / 16.0;
  int top = -1;
  double centre = lo;
  for (int b = 0; b < 16; ++b) {
    const double left = lo + b * w, right = b == 15 ? hi : lo + (b + 1) * w;
    int c = 0;
    for (double x : v) c += (x >= left && (x < right || (b == 15 && x <= right)));
    if (c > top) top = c, centre = lo + (b + 0.5) * w;
  }
  return centre;
}

inline OracleStats oracle_stats(const Tensor& s) {
  OracleStats o;
  const std::size_t n = s.rows();
  for (std::size_t c = 0; c < s.cols(); ++c) {
    std::vector<double> v(n);
    for (std::size_t r = 0; r < n; ++r) v[r] = s.at(r, c);
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    o.max.push_back(sorted.back());
    o.min.push_back(sorted.front());
    o.mean.push_back(mean);
    o.var.push_back(var / n);
    o.median.push_back(n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]));
    o.mode.push_back(oracle_mode(v));
  }
  return o;
}

// Cosine and softmax in long double, written out per element.
inline std::vector<double> oracle_weights(const Tensor& context, const Tensor& s, double temperature) {
  const std::size_t n = s.rows(), d = s.cols();
  std::vector<long double> sims(n);
  long double cn = 0;
  for (std::size_t j = 0; j < d; ++j) cn += static_cast<long double>(context[j]) * context[j];
  for (std::size_t i = 0; i < n; ++i) {
    long double dot = 0, xn = 0;
    for (std::size_t j = 0; j < d; ++j) {
      dot += static_cast<long double>(context[j]) * s.at(i, j);
      xn += static_cast<long double>(s.at(i, j)) * s.at(i, j);
    }
    sims[i] = dot / std::sqrt(cn * xn);
  }
  long double z = 0;
  std::vector<long double> e(n);
  for (std::size_t i = 0; i < n; ++i) z += e[i] = std::exp(sims[i] / temperature);
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<double>(e[i] / z);
  return w;
}

// Pair enumeration in long double over batch rows followed by memory rows.
inline double oracle_loss(const Tensor& a, const std::vector<std::string>& labels_in, const CrossBatchMemory& mem,
                   double tau, const std::vector<bool>& anchors = {}) {
  std::vector<std::vector<long double>> z;
  std::vector<std::string> labels = labels_in;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    long double n = 0;
    for (double x : a.row(r)) n += static_cast<long double>(x) * x;
    n = std::sqrt(n);
    std::vector<long double> v;
    for (double x : a.row(r)) v.push_back(x / n);
    z.push_back(v);
  }
  for (const auto& e : mem.entries()) {
    z.emplace_back(e.z.values().begin(), e.z.values().end());
    labels.push_back(e.subject_id);
  }
  auto dot = [&](std::size_t i, std::size_t j) {
    long double s = 0;
    for (std::size_t c = 0; c < z[i].size(); ++c) s += z[i][c] * z[j][c];
    return s / tau;
  };
  long double total = 0;
  int count = 0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    if (!anchors.empty() && !anchors[i]) continue;
    long double denom = 0;
    for (std::size_t j = 0; j < z.size(); ++j)
      if (j != i) denom += std::exp(dot(i, j));
    long double acc = 0;
    int np = 0;
    for (std::size_t p = 0; p < z.size(); ++p)
      if (p != i && labels[p] == labels[i]) acc += std::log(std::exp(dot(i, p)) / denom), ++np;
    total += -acc / np;
    ++count;
  }
  return static_cast<double>(total / count);
}

}  // namespace conan::testing
