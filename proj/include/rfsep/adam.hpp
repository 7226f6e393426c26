#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rfsep/error.hpp"
#include "rfsep/ops.hpp"
#include "rfsep/tensor.hpp"

namespace rfsep::ad {

struct Bounds {
  double lo;
  double hi;
};

/// A trainable tensor as the optimizer sees it. Dilations carry bounds and
/// are projected back into them after every step.
struct Parameter {
  std::string name;
  Tensor tensor;
  std::optional<Bounds> bounds;
  double lr_scale = 1.0;
};

inline Parameter as_parameter(std::string name, const DilationParam& d) {
  return {std::move(name), d.value, Bounds{d.d_min, d.d_max}, 1.0};
}

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamOptions options;
  std::uint64_t step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  explicit AdamState(AdamOptions opts = {}) : options(opts) {}

  AdamState(const std::vector<Parameter>& params, AdamOptions opts) : options(opts) {
    for (const auto& p : params) {
      first_moment.emplace_back(p.tensor.size(), 0.0);
      second_moment.emplace_back(p.tensor.size(), 0.0);
    }
  }
};

inline void project(Parameter& p) {
  if (!p.bounds) return;
  for (double& v : p.tensor.data()) v = std::clamp(v, p.bounds->lo, p.bounds->hi);
}

/// One bias-corrected Adam update in place, followed by bound projection.
/// Gradients are validated for every parameter before anything is modified.
inline void adam_step(std::vector<Parameter>& params, AdamState& state) {
  if (state.first_moment.empty() && state.step_count == 0) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.tensor.size(), 0.0);
      state.second_moment.emplace_back(p.tensor.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw Error(ErrorCode::shape_mismatch, "adam_step: optimizer state tracks " +
                                               std::to_string(state.first_moment.size()) +
                                               " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].tensor.size()) {
      throw Error(ErrorCode::shape_mismatch, "adam_step: state shape mismatch for " + params[i].name);
    }
    if (!all_finite(params[i].tensor.grad())) {
      throw Error(ErrorCode::non_finite, "adam_step: gradient of '" + params[i].name + "' is not finite");
    }
  }

  ++state.step_count;
  const auto& o = state.options;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(o.beta1, t);
  const double correction2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].tensor.data();
    const auto grad = params[i].tensor.grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const double lr = o.lr * params[i].lr_scale;
    for (std::size_t k = 0; k < values.size(); ++k) {
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * grad[k];
      v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * grad[k] * grad[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      values[k] -= lr * m_hat / (std::sqrt(v_hat) + o.epsilon);
    }
    project(params[i]);
  }
}

inline void zero_grad(std::vector<Parameter>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

}  // namespace rfsep::ad
