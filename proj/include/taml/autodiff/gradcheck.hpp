#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "taml/autodiff/backward.hpp"
#include "taml/autodiff/tape.hpp"

namespace taml::ad {

/// Builds a scalar on `tape` from parameter leaves.
using ScalarBuilder = std::function<Variable(Tape&, std::span<const Variable>)>;

struct FiniteDifferenceReport {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  // Flat indices where a perturbed evaluation was not finite.
  std::vector<std::size_t> nonfinite;

  bool passed(double tolerance) const { return nonfinite.empty() && max_relative_error < tolerance; }
};

inline constexpr double kDefaultDenominatorFloor = 1e-8;

/// |a - b| / max(|a|, |b|, floor)
inline double relative_error(double a, double b, double floor = kDefaultDenominatorFloor) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

namespace detail {
inline double evaluate_scalar(const ScalarBuilder& fn, std::span<const Matrix> params) {
  Tape tape;
  std::vector<Variable> leaves;
  leaves.reserve(params.size());
  for (const Matrix& p : params) leaves.push_back(tape.leaf(p));
  return fn(tape, leaves).item();
}
}  // namespace detail

/// Compares backward() against central differences with the given step,
/// element by element over the flattened parameters. Raise `denominator_floor`
/// when gradient entries sit below the roundoff of the difference quotient.
inline FiniteDifferenceReport finite_difference_check(const ScalarBuilder& fn, std::span<const Matrix> params,
                                                      double step,
                                                      double denominator_floor = kDefaultDenominatorFloor) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_difference_check: step must be > 0");
  if (!(denominator_floor > 0.0)) throw std::invalid_argument("finite_difference_check: floor must be > 0");

  GradientVector analytic;
  {
    Tape tape;
    std::vector<Variable> leaves;
    for (const Matrix& p : params) leaves.push_back(tape.leaf(p));
    analytic = backward(fn(tape, leaves), leaves);
  }

  FiniteDifferenceReport report;
  std::vector<Matrix> work(params.begin(), params.end());
  std::size_t flat = 0;
  for (std::size_t t = 0; t < work.size(); ++t) {
    for (std::size_t e = 0; e < work[t].size(); ++e, ++flat) {
      const double original = work[t][e];
      work[t][e] = original + step;
      const double up = detail::evaluate_scalar(fn, work);
      work[t][e] = original - step;
      const double down = detail::evaluate_scalar(fn, work);
      work[t][e] = original;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        report.nonfinite.push_back(flat);
        report.max_relative_error = std::numeric_limits<double>::infinity();
        continue;
      }
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(analytic[flat], numeric, denominator_floor);
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_index = flat;
        report.worst_analytic = analytic.values[flat];
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace taml::ad
