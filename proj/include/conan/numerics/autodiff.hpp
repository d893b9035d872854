#pragma once

// Reverse-mode differentiation over a tape of recorded primitives.
//
// Nodes are appended in evaluation order, so a parent always has a smaller
// id than its child and a reverse sweep over the tape is a valid reverse
// topological order. A tape belongs to one thread from forward to backward.

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "conan/numerics/tensor.hpp"

namespace conan::ad {

class Tape;

class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Propagates the gradient stored at `self` into its parents.
  using BackwardRule = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value);

  // Used by primitive implementations. Rejects non-finite values and parents
  // that were not recorded earlier on this tape.
  Var record(const char* op, Tensor value, std::vector<Var> parents,
             BackwardRule rule);

  // Zeroes every gradient, seeds the scalar root with 1 and sweeps the tape
  // once in reverse.
  void backward(Var root);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  const char* op(std::size_t id) const { return nodes_.at(id).op; }

  // Gradient buffer of a parent for accumulation; nullptr when the parent
  // does not require a gradient.
  Tensor* accumulator(std::size_t id);

  std::size_t size() const { return nodes_.size(); }
  bool has_gradients() const { return swept_; }

 private:
  struct Node {
    const char* op;
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    BackwardRule rule;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;
  bool swept_ = false;
};

// --- primitives -----------------------------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double factor);
// a[m x n] + row[n], row broadcast over every row of a.
Var add_row(Var a, Var row);
Var exp(Var a);
Var log(Var a);
Var relu(Var a);
Var sum(Var a);
Var reshape(Var a, Shape shape);

// Flattened concatenation into one rank-1 tensor.
Var concat(std::span<const Var> parts);
// Stacks rows; every part must have the same column count.
Var concat_rows(std::span<const Var> parts);
// Joins column blocks; every part must have the same row count.
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t start, std::size_t count);
// Row r as a rank-1 tensor.
Var slice_row(Var a, std::size_t r);

Var softmax_rows(Var a, double temperature);
// Log-softmax across each row restricted to entries where keep is true;
// excluded entries produce 0 and receive no gradient. Each row must keep at
// least one entry.
Var log_softmax_rows(Var a, const std::vector<bool>& keep);
// Each row divided by its L2 norm; a zero row is a DegenerateInputError.
Var l2_normalize_rows(Var a);

// Column-wise reductions over the rows of a [N x d] matrix, giving [d].
// Max, min and median route the gradient to the selected entries, ties going
// to the lowest row index; an even-N median splits it between the two
// central order statistics.
Var max_rows(Var a);
Var min_rows(Var a);
Var mean_rows(Var a);
// Population variance (divide by N).
Var var_rows(Var a);
Var median_rows(Var a);
// Histogram mode; see summarizer.hpp for the estimator.
Var mode_rows(Var a);

}  // namespace conan::ad
