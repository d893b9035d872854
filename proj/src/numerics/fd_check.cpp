#include "conan/numerics/fd_check.hpp"

#include <algorithm>
#include <cmath>

#include "conan/errors.hpp"

namespace conan {
namespace {

double evaluate(const ScalarGraph& f, std::span<const NamedTensor> params) {
  try {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) leaves.push_back(tape.constant(p.value));
    const ad::Var out = f(tape, leaves);
    if (out.value().size() != 1) throw EvaluationError("fd_check: function is not scalar");
    const double v = out.value()[0];
    if (!std::isfinite(v)) throw EvaluationError("fd_check: non-finite evaluation");
    return v;
  } catch (const NumericError& e) {
    throw EvaluationError(std::string("fd_check: ") + e.what());
  }
}

}  // namespace

FdReport fd_check(const ScalarGraph& f, std::span<const NamedTensor> params,
                  const FdOptions& options) {
  if (!(options.step > 0.0)) throw ParameterError("fd_check: step must be positive");
  if (options.order != 2 && options.order != 4) throw ParameterError("fd_check: order must be 2 or 4");

  std::vector<Tensor> analytic;
  {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const auto& p : params) leaves.push_back(tape.leaf(p.value));
    ad::Var out;
    try {
      out = f(tape, leaves);
    } catch (const NumericError& e) {
      throw EvaluationError(std::string("fd_check: ") + e.what());
    }
    tape.backward(out);
    for (const auto& leaf : leaves) analytic.push_back(leaf.grad());
  }

  FdReport report;
  report.tolerance = options.tolerance;
  std::vector<NamedTensor> work(params.begin(), params.end());
  for (std::size_t p = 0; p < work.size(); ++p) {
    FdParamSummary summary;
    summary.name = work[p].name;
    summary.entries = work[p].value.size();
    for (std::size_t i = 0; i < work[p].value.size(); ++i) {
      const double original = work[p].value[i];
      auto at = [&](double offset) {
        work[p].value[i] = original + offset;
        return evaluate(f, work);
      };
      const double h = options.step;
      const double numeric = options.order == 2
                                 ? (at(h) - at(-h)) / (2.0 * h)
                                 : (-at(2 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2 * h)) / (12.0 * h);
      work[p].value[i] = original;

      const double a = analytic[p][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      if (rel >= summary.max_rel_error) {
        summary.max_rel_error = rel;
        summary.worst_index = i;
        summary.analytic = a;
        summary.numeric = numeric;
      }
      ++report.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, summary.max_rel_error);
    report.params.push_back(std::move(summary));
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace conan
