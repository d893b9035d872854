#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "conan/numerics/autodiff.hpp"

namespace conan {

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Builds a scalar on `tape` from leaves bound to the parameters, in order.
using ScalarGraph = std::function<ad::Var(ad::Tape& tape, std::span<const ad::Var> params)>;

struct FdParamSummary {
  std::string name;
  std::size_t entries = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double max_rel_error = 0.0;
};

struct FdReport {
  std::vector<FdParamSummary> params;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  double tolerance = 0.0;
  bool passed = false;
};

struct FdOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor of the relative error |a - n| / max(|a|, |n|, floor),
  // so gradients that are zero up to rounding compare absolutely. Central
  // differences at h = 1e-5 on an O(1) loss carry about eps * |f| / h ~ 1e-10
  // of rounding noise; a floor of 1e-5 keeps that noise at ~1e-5 relative.
  double floor = 1e-5;
  // 2: central difference. 4: five-point stencil
  // (-f(p+2h) + 8f(p+h) - 8f(p-h) + f(p-2h)) / 12h. Its wider reach crosses
  // the kinks of max, min and median sooner, so 2 is the better default here.
  int order = 2;
};

// Compares the tape's analytic gradient of f with finite differences for
// every entry of every parameter. A non-finite
// evaluation raises EvaluationError.
FdReport fd_check(const ScalarGraph& f, std::span<const NamedTensor> params,
                  const FdOptions& options = {});

}  // namespace conan
