#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "rfsep/tensor.hpp"

namespace rfsep::ad {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double denominator_floor = 1e-6;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_element = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::vector<double> per_input_max;
  bool passed = true;
};

using ScalarFunction = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares reverse-mode gradients of `fn` against central differences for
/// every element of every input with requires_grad set. Inputs are restored
/// on return. Never throws for a mismatch; the report carries the verdict.
inline GradCheckReport grad_check(const ScalarFunction& fn, std::vector<Tensor>& inputs,
                                  GradCheckOptions options = {}) {
  GradCheckReport report;
  report.per_input_max.assign(inputs.size(), 0.0);
  for (auto& in : inputs) in.zero_grad();
  {
    Tensor loss = fn(inputs);
    backward(loss);
  }

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].requires_grad()) continue;
    auto values = inputs[i].data();
    const auto analytic = inputs[i].grad();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + options.step;
      const double up = fn(inputs).item();
      values[k] = saved - options.step;
      const double down = fn(inputs).item();
      values[k] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double denom =
          std::max({std::abs(analytic[k]), std::abs(numeric), options.denominator_floor});
      double rel = std::abs(analytic[k] - numeric) / denom;
      if (!std::isfinite(rel)) rel = std::numeric_limits<double>::infinity();
      report.per_input_max[i] = std::max(report.per_input_max[i], rel);
      if (rel > report.max_relative_error || !std::isfinite(rel)) {
        report.max_relative_error = rel;
        report.worst_input = i;
        report.worst_element = k;
        report.worst_analytic = analytic[k];
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace rfsep::ad
