#include "conan/numerics/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "conan/errors.hpp"
#include "conan/numerics/kernels.hpp"
#include "conan/numerics/order_stats.hpp"

namespace conan::ad {

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Tensor value) {
  require_finite(value, "constant");
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value) {
  require_finite(value, "leaf");
  nodes_.push_back(Node{"leaf", std::move(value), {}, {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, std::vector<Var> parents,
                 BackwardRule rule) {
  require_finite(value, op);
  const std::size_t self = nodes_.size();
  Node node{op, std::move(value), {}, {}, std::move(rule), false};
  node.parents.reserve(parents.size());
  for (const Var& p : parents) {
    if (&p.tape() != this) throw GraphError(std::string(op) + ": parent from another tape");
    if (p.id() >= self) throw GraphError(std::string(op) + ": cycle in graph");
    node.parents.push_back(p.id());
    node.requires_grad = node.requires_grad || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return Var(this, self);
}

const Tensor& Tape::grad(std::size_t id) const {
  const Node& n = nodes_.at(id);
  if (!swept_ || !n.requires_grad)
    throw GraphError("gradient requested for a node without one");
  return n.grad;
}

Tensor* Tape::accumulator(std::size_t id) {
  Node& n = nodes_.at(id);
  return n.requires_grad ? &n.grad : nullptr;
}

void Tape::backward(Var root) {
  if (&root.tape() != this) throw GraphError("backward root from another tape");
  if (root.value().size() != 1) throw DimensionError("backward root must be scalar");
  for (Node& n : nodes_) {
    if (n.requires_grad) {
      n.grad = Tensor(n.value.shape(), 0.0);
    } else {
      n.grad = Tensor();
    }
  }
  swept_ = true;
  Node& r = nodes_[root.id()];
  if (!r.requires_grad) return;
  r.grad[0] = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.rule) continue;
    n.rule(*this, i);
  }
}

namespace {

const kernels::KernelTable& K() { return kernels::active(); }

void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

// Accumulate g into the gradient of `target`, if it has one.
void accumulate(Tape& t, std::size_t target, const Tensor& g) {
  if (Tensor* acc = t.accumulator(target)) K().axpy(1.0, g.data(), acc->data(), g.size());
}

}  // namespace

Var matmul(Var a, Var b) {
  Tensor c = conan::matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("matmul", std::move(c), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    if (Tensor* ga = t.accumulator(ia)) K().gemm_nt_acc(m, n, k, g.data(), bv.data(), ga->data());
    if (Tensor* gb = t.accumulator(ib)) K().gemm_tn_acc(m, k, n, av.data(), g.data(), gb->data());
  });
}

Var transpose(Var a) {
  const std::size_t ia = a.id();
  return a.tape().record("transpose", conan::transpose(a.value()), {a},
                         [ia](Tape& t, std::size_t self) {
                           Tensor* ga = t.accumulator(ia);
                           if (!ga) return;
                           const Tensor gt = conan::transpose(t.grad(self));
                           K().axpy(1.0, gt.data(), ga->data(), gt.size());
                         });
}

Var add(Var a, Var b) {
  same_shape(a, b, "add");
  Tensor c = a.value();
  K().axpy(1.0, b.value().data(), c.data(), c.size());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("add", std::move(c), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    accumulate(t, ia, t.grad(self));
    accumulate(t, ib, t.grad(self));
  });
}

Var sub(Var a, Var b) {
  same_shape(a, b, "sub");
  Tensor c = a.value();
  K().axpy(-1.0, b.value().data(), c.data(), c.size());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("sub", std::move(c), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    accumulate(t, ia, g);
    if (Tensor* gb = t.accumulator(ib)) K().axpy(-1.0, g.data(), gb->data(), g.size());
  });
}

Var mul(Var a, Var b) {
  same_shape(a, b, "mul");
  Tensor c(a.shape(), 0.0);
  K().fma_accumulate(a.value().data(), b.value().data(), c.data(), c.size());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("mul", std::move(c), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (Tensor* ga = t.accumulator(ia)) K().fma_accumulate(g.data(), t.value(ib).data(), ga->data(), g.size());
    if (Tensor* gb = t.accumulator(ib)) K().fma_accumulate(g.data(), t.value(ia).data(), gb->data(), g.size());
  });
}

Var div(Var a, Var b) {
  same_shape(a, b, "div");
  Tensor c = a.value();
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (b.value()[i] == 0.0) throw DegenerateInputError("div: division by zero");
    c[i] /= b.value()[i];
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("div", std::move(c), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    Tensor* ga = t.accumulator(ia);
    Tensor* gb = t.accumulator(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (ga) (*ga)[i] += g[i] / bv[i];
      if (gb) (*gb)[i] -= g[i] * av[i] / (bv[i] * bv[i]);
    }
  });
}

Var scale(Var a, double factor) {
  Tensor c(a.shape(), 0.0);
  K().axpy(factor, a.value().data(), c.data(), c.size());
  const std::size_t ia = a.id();
  return a.tape().record("scale", std::move(c), {a}, [ia, factor](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (Tensor* ga = t.accumulator(ia)) K().axpy(factor, g.data(), ga->data(), g.size());
  });
}

Var add_row(Var a, Var row) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  if (row.value().size() != n)
    throw DimensionError("add_row: row of " + std::to_string(row.value().size()) +
                         " values for " + std::to_string(n) + " columns");
  Tensor c = av;
  for (std::size_t r = 0; r < m; ++r) K().axpy(1.0, row.value().data(), c.data() + r * n, n);
  const std::size_t ia = a.id(), ib = row.id();
  return a.tape().record("add_row", std::move(c), {a, row}, [ia, ib, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    accumulate(t, ia, g);
    if (Tensor* gb = t.accumulator(ib))
      for (std::size_t r = 0; r < m; ++r) K().axpy(1.0, g.data() + r * n, gb->data(), n);
  });
}

Var exp(Var a) {
  Tensor c = a.value();
  for (double& x : c.values()) x = std::exp(x);
  const std::size_t ia = a.id();
  return a.tape().record("exp", std::move(c), {a}, [ia](Tape& t, std::size_t self) {
    if (Tensor* ga = t.accumulator(ia))
      K().fma_accumulate(t.grad(self).data(), t.value(self).data(), ga->data(), ga->size());
  });
}

Var log(Var a) {
  Tensor c = a.value();
  for (double& x : c.values()) {
    if (!(x > 0.0)) throw DegenerateInputError("log of a non-positive value");
    x = std::log(x);
  }
  const std::size_t ia = a.id();
  return a.tape().record("log", std::move(c), {a}, [ia](Tape& t, std::size_t self) {
    Tensor* ga = t.accumulator(ia);
    if (!ga) return;
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] / av[i];
  });
}

Var relu(Var a) {
  Tensor c = a.value();
  for (double& x : c.values()) x = x > 0.0 ? x : 0.0;
  const std::size_t ia = a.id();
  return a.tape().record("relu", std::move(c), {a}, [ia](Tape& t, std::size_t self) {
    Tensor* ga = t.accumulator(ia);
    if (!ga) return;
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av[i] > 0.0) (*ga)[i] += g[i];
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double x : a.value().values()) s += x;
  const std::size_t ia = a.id();
  return a.tape().record("sum", Tensor::scalar(s), {a}, [ia](Tape& t, std::size_t self) {
    Tensor* ga = t.accumulator(ia);
    if (!ga) return;
    const double g = t.grad(self)[0];
    for (double& x : ga->values()) x += g;
  });
}

Var reshape(Var a, Shape shape) {
  Tensor c = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id();
  return a.tape().record("reshape", std::move(c), {a}, [ia](Tape& t, std::size_t self) {
    accumulate(t, ia, t.grad(self));
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat of nothing");
  std::vector<double> data;
  std::vector<std::size_t> ids, sizes;
  for (const Var& p : parts) {
    const auto v = p.value().values();
    data.insert(data.end(), v.begin(), v.end());
    ids.push_back(p.id());
    sizes.push_back(v.size());
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return parts[0].tape().record(
      "concat", Tensor::vector(std::move(data)), std::move(parents),
      [ids, sizes](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        std::size_t off = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (Tensor* gp = t.accumulator(ids[i])) K().axpy(1.0, g.data() + off, gp->data(), sizes[i]);
          off += sizes[i];
        }
      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const std::size_t n = parts[0].value().cols();
  std::vector<double> data;
  std::vector<std::size_t> ids, sizes;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.value().cols() != n) throw DimensionError("concat_rows: column count mismatch");
    const auto v = p.value().values();
    data.insert(data.end(), v.begin(), v.end());
    rows += p.value().rows();
    ids.push_back(p.id());
    sizes.push_back(v.size());
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return parts[0].tape().record(
      "concat_rows", Tensor::matrix(rows, n, std::move(data)), std::move(parents),
      [ids, sizes](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        std::size_t off = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (Tensor* gp = t.accumulator(ids[i])) K().axpy(1.0, g.data() + off, gp->data(), sizes[i]);
          off += sizes[i];
        }
      });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const std::size_t m = parts[0].value().rows();
  std::size_t n = 0;
  std::vector<std::size_t> ids, widths;
  for (const Var& p : parts) {
    if (p.value().rows() != m) throw DimensionError("concat_cols: row count mismatch");
    n += p.value().cols();
    ids.push_back(p.id());
    widths.push_back(p.value().cols());
  }
  Tensor c({m, n});
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < m; ++r)
      std::copy(v.row(r).begin(), v.row(r).end(), c.row(r).begin() + static_cast<std::ptrdiff_t>(off));
    off += v.cols();
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return parts[0].tape().record(
      "concat_cols", std::move(c), std::move(parents),
      [ids, widths, m, n](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        std::size_t col = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (Tensor* gp = t.accumulator(ids[i]))
            for (std::size_t r = 0; r < m; ++r)
              K().axpy(1.0, g.data() + r * n + col, gp->data() + r * widths[i], widths[i]);
          col += widths[i];
        }
      });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  if (count == 0 || start + count > n) throw DimensionError("slice_cols out of range");
  Tensor c({m, count});
  for (std::size_t r = 0; r < m; ++r)
    std::copy_n(av.data() + r * n + start, count, c.data() + r * count);
  const std::size_t ia = a.id();
  return a.tape().record("slice_cols", std::move(c), {a},
                         [ia, start, count, m, n](Tape& t, std::size_t self) {
                           Tensor* ga = t.accumulator(ia);
                           if (!ga) return;
                           const Tensor& g = t.grad(self);
                           for (std::size_t r = 0; r < m; ++r)
                             K().axpy(1.0, g.data() + r * count, ga->data() + r * n + start, count);
                         });
}

Var slice_row(Var a, std::size_t r) {
  const Tensor& av = a.value();
  if (r >= av.rows()) throw DimensionError("slice_row out of range");
  const auto row = av.row(r);
  const std::size_t n = av.cols();
  const std::size_t ia = a.id();
  return a.tape().record("slice_row", Tensor::vector({row.begin(), row.end()}), {a},
                         [ia, r, n](Tape& t, std::size_t self) {
                           if (Tensor* ga = t.accumulator(ia))
                             K().axpy(1.0, t.grad(self).data(), ga->data() + r * n, n);
                         });
}

Var softmax_rows(Var a, double temperature) {
  Tensor c = conan::softmax(a.value().reshaped({a.value().rows(), a.value().cols()}), 1,
                            temperature)
                 .reshaped(a.shape());
  const std::size_t ia = a.id();
  const std::size_t m = a.value().rows(), n = a.value().cols();
  return a.tape().record("softmax_rows", std::move(c), {a},
                         [ia, temperature, m, n](Tape& t, std::size_t self) {
                           Tensor* ga = t.accumulator(ia);
                           if (!ga) return;
                           const Tensor& g = t.grad(self);
                           const Tensor& y = t.value(self);
                           for (std::size_t r = 0; r < m; ++r) {
                             const double* yr = y.data() + r * n;
                             const double* gr = g.data() + r * n;
                             const double inner = K().dot(yr, gr, n);
                             double* out = ga->data() + r * n;
                             for (std::size_t j = 0; j < n; ++j)
                               out[j] += yr[j] * (gr[j] - inner) / temperature;
                           }
                         });
}

Var log_softmax_rows(Var a, const std::vector<bool>& keep) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  if (keep.size() != m * n) throw DimensionError("log_softmax_rows: mask size mismatch");
  Tensor c(av.shape(), 0.0);
  Tensor probs(av.shape(), 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j)
      if (keep[r * n + j]) mx = std::max(mx, av.at(r, j));
    if (mx == -INFINITY) throw DimensionError("log_softmax_rows: row with no kept entry");
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (keep[r * n + j]) z += std::exp(av.at(r, j) - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) {
      if (!keep[r * n + j]) continue;
      c[r * n + j] = av.at(r, j) - lz;
      probs[r * n + j] = std::exp(c[r * n + j]);
    }
  }
  const std::size_t ia = a.id();
  return a.tape().record(
      "log_softmax_rows", std::move(c), {a},
      [ia, probs = std::move(probs), keep, m, n](Tape& t, std::size_t self) {
        Tensor* ga = t.accumulator(ia);
        if (!ga) return;
        const Tensor& g = t.grad(self);
        for (std::size_t r = 0; r < m; ++r) {
          double gsum = 0.0;
          for (std::size_t j = 0; j < n; ++j)
            if (keep[r * n + j]) gsum += g[r * n + j];
          for (std::size_t j = 0; j < n; ++j)
            if (keep[r * n + j]) (*ga)[r * n + j] += g[r * n + j] - probs[r * n + j] * gsum;
        }
      });
}

Var l2_normalize_rows(Var a) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor c = av;
  std::vector<double> norms(m);
  for (std::size_t r = 0; r < m; ++r) {
    norms[r] = std::sqrt(K().sum_squares(av.data() + r * n, n));
    if (!(norms[r] > 0.0)) throw DegenerateInputError("l2_normalize_rows: zero-norm row");
    for (std::size_t j = 0; j < n; ++j) c[r * n + j] /= norms[r];
  }
  const std::size_t ia = a.id();
  return a.tape().record("l2_normalize_rows", std::move(c), {a},
                         [ia, norms = std::move(norms), m, n](Tape& t, std::size_t self) {
                           Tensor* ga = t.accumulator(ia);
                           if (!ga) return;
                           const Tensor& g = t.grad(self);
                           const Tensor& y = t.value(self);
                           for (std::size_t r = 0; r < m; ++r) {
                             const double* yr = y.data() + r * n;
                             const double* gr = g.data() + r * n;
                             const double inner = K().dot(yr, gr, n);
                             double* out = ga->data() + r * n;
                             for (std::size_t j = 0; j < n; ++j)
                               out[j] += (gr[j] - yr[j] * inner) / norms[r];
                           }
                         });
}

namespace {

using PickFn = ColumnPick (*)(const Tensor&, std::size_t);

Var column_reduce(Var a, const char* op, PickFn pick) {
  const Tensor& av = a.value();
  const std::size_t d = av.cols();
  std::vector<ColumnPick> picks(d);
  std::vector<double> out(d);
  for (std::size_t j = 0; j < d; ++j) {
    picks[j] = pick(av, j);
    out[j] = picks[j].value;
  }
  const std::size_t ia = a.id();
  return a.tape().record(op, Tensor::vector(std::move(out)), {a},
                         [ia, picks = std::move(picks), d](Tape& t, std::size_t self) {
                           Tensor* ga = t.accumulator(ia);
                           if (!ga) return;
                           const Tensor& g = t.grad(self);
                           for (std::size_t j = 0; j < d; ++j)
                             for (std::size_t k = 0; k < picks[j].terms; ++k)
                               (*ga)[picks[j].rows[k] * d + j] += picks[j].coefs[k] * g[j];
                         });
}

}  // namespace

Var max_rows(Var a) { return column_reduce(a, "max_rows", column_max); }
Var min_rows(Var a) { return column_reduce(a, "min_rows", column_min); }
Var median_rows(Var a) { return column_reduce(a, "median_rows", column_median); }
Var mode_rows(Var a) { return column_reduce(a, "mode_rows", column_mode); }

Var mean_rows(Var a) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), d = av.cols();
  Tensor c({d}, 0.0);
  for (std::size_t r = 0; r < m; ++r) K().axpy(1.0, av.data() + r * d, c.data(), d);
  const double inv = 1.0 / static_cast<double>(m);
  for (double& x : c.values()) x *= inv;
  const std::size_t ia = a.id();
  return a.tape().record("mean_rows", std::move(c), {a}, [ia, m, d, inv](Tape& t, std::size_t self) {
    Tensor* ga = t.accumulator(ia);
    if (!ga) return;
    for (std::size_t r = 0; r < m; ++r) K().axpy(inv, t.grad(self).data(), ga->data() + r * d, d);
  });
}

Var var_rows(Var a) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), d = av.cols();
  const double inv = 1.0 / static_cast<double>(m);
  std::vector<double> mean(d, 0.0);
  for (std::size_t r = 0; r < m; ++r) K().axpy(1.0, av.data() + r * d, mean.data(), d);
  for (double& x : mean) x *= inv;
  Tensor c({d}, 0.0);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < d; ++j) {
      const double dev = av.at(r, j) - mean[j];
      c[j] += dev * dev;
    }
  for (double& x : c.values()) x *= inv;
  const std::size_t ia = a.id();
  return a.tape().record("var_rows", std::move(c), {a},
                         [ia, m, d, inv, mean = std::move(mean)](Tape& t, std::size_t self) {
                           Tensor* ga = t.accumulator(ia);
                           if (!ga) return;
                           const Tensor& g = t.grad(self);
                           const Tensor& av = t.value(ia);
                           for (std::size_t r = 0; r < m; ++r)
                             for (std::size_t j = 0; j < d; ++j)
                               (*ga)[r * d + j] += 2.0 * inv * (av.at(r, j) - mean[j]) * g[j];
                         });
}

}  // namespace conan::ad
