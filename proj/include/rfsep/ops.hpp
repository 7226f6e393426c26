#pragma once

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <vector>

#include "rfsep/error.hpp"
#include "rfsep/tensor.hpp"

namespace rfsep::ad {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// A dilation rate in samples, stored directly (not reparameterized) and
/// kept inside [d_min, d_max] by projection after each optimizer step.
struct DilationParam {
  Tensor value;
  double d_min = 1.0;
  double d_max = 2.0;

  static DilationParam make(double rate, double d_max, bool learnable) {
    if (!(d_max >= 1.0)) throw Error(ErrorCode::invalid_argument, "d_max must be >= 1");
    if (!(rate >= 1.0 && rate <= d_max)) {
      throw Error(ErrorCode::invalid_argument,
                  "dilation " + std::to_string(rate) + " outside [1, " + std::to_string(d_max) + "]");
    }
    return {Tensor::scalar(rate, learnable), 1.0, d_max};
  }

  double rate() const { return value.item(); }
};

// Only centered zero padding with output length == input length is supported.
enum class Padding { same };

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorCode::shape_mismatch, std::string(op) + ": " + shape_string(a.shape()) +
                                               " vs " + shape_string(b.shape()));
  }
}

inline void require_finite(const Tensor& t, const char* op, const char* what) {
  if (!all_finite(t.data())) {
    throw Error(ErrorCode::non_finite, std::string(op) + ": " + what + " contains NaN or Inf");
  }
}

// Fractional shift of one tap: x_hat(t + offset * d) reads
// (1 - frac) * x[t + base] + frac * x[t + base + 1].
struct TapShift {
  double offset;
  long base;
  double frac;
};

inline std::vector<TapShift> tap_shifts(std::size_t taps, double dilation) {
  std::vector<TapShift> shifts(taps);
  const long half = static_cast<long>(taps / 2);
  for (std::size_t j = 0; j < taps; ++j) {
    const double offset = static_cast<double>(static_cast<long>(j) - half);
    const double s = offset * dilation;
    const double base = std::floor(s);
    shifts[j] = {offset, static_cast<long>(base), s - base};
  }
  return shifts;
}

// Stacked interpolated input, row (c * taps + j) holds channel c shifted by tap j.
inline RowMatrix shifted_input(std::span<const double> x, std::size_t channels, std::size_t length,
                               const std::vector<TapShift>& shifts) {
  const std::size_t taps = shifts.size();
  const long len = static_cast<long>(length);
  RowMatrix stacked(channels * taps, length);
  for (std::size_t c = 0; c < channels; ++c) {
    const double* xc = x.data() + c * length;
    for (std::size_t j = 0; j < taps; ++j) {
      const auto [offset, base, frac] = shifts[j];
      double* row = stacked.data() + (c * taps + j) * length;
      const double w0 = 1.0 - frac;
      for (long t = 0; t < len; ++t) {
        const long i0 = t + base;
        const double a = (i0 >= 0 && i0 < len) ? xc[i0] : 0.0;
        const double b = (i0 + 1 >= 0 && i0 + 1 < len) ? xc[i0 + 1] : 0.0;
        row[t] = w0 * a + frac * b;
      }
    }
  }
  return stacked;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

/// 1-D convolution with a continuous dilation rate.
///
/// out[o, t] = sum_{c, m} kernel[o, c, m] * x_hat_c(t + m * d), where the taps are
/// centered (m runs from -(k-1)/2 to (k-1)/2) and x_hat_c linearly interpolates
/// channel c with zeros outside [0, T). The gradient with respect to d flows
/// through the interpolation weights. At integer tap positions the left limit
/// in d is used.
inline Tensor conv1d_frac(const Tensor& input, const Tensor& kernel, const Tensor& dilation,
                          Padding = Padding::same) {
  if (input.shape().size() != 2) {
    throw Error(ErrorCode::shape_mismatch,
                "conv1d_frac: input must be [channels, time], got " + shape_string(input.shape()));
  }
  if (kernel.shape().size() != 3) {
    throw Error(ErrorCode::shape_mismatch,
                "conv1d_frac: kernel must be [out, in, taps], got " + shape_string(kernel.shape()));
  }
  if (dilation.size() != 1) throw Error(ErrorCode::shape_mismatch, "conv1d_frac: dilation must be scalar");
  const std::size_t channels = input.dim(0), length = input.dim(1);
  const std::size_t out_ch = kernel.dim(0), taps = kernel.dim(2);
  if (kernel.dim(1) != channels) {
    throw Error(ErrorCode::shape_mismatch,
                "conv1d_frac: kernel expects " + std::to_string(kernel.dim(1)) +
                    " input channels, input has " + std::to_string(channels));
  }
  if (taps % 2 == 0) {
    throw Error(ErrorCode::invalid_argument,
                "conv1d_frac: kernel size must be odd, got " + std::to_string(taps));
  }
  detail::require_finite(input, "conv1d_frac", "input");
  detail::require_finite(kernel, "conv1d_frac", "kernel");
  const double d = dilation.item();
  if (!std::isfinite(d)) throw Error(ErrorCode::non_finite, "conv1d_frac: dilation is not finite");

  const auto shifts = detail::tap_shifts(taps, d);
  const ConstMatrixMap weights(kernel.data().data(), out_ch, channels * taps);
  std::vector<double> out(out_ch * length);
  MatrixMap out_map(out.data(), out_ch, length);
  if (taps == 1) {
    out_map.noalias() = weights * ConstMatrixMap(input.data().data(), channels, length);
  } else {
    out_map.noalias() = weights * detail::shifted_input(input.data(), channels, length, shifts);
  }

  auto backward_fn = [channels, length, out_ch, taps, shifts](detail::Node& self) {
    detail::Node& in = *self.parents[0];
    detail::Node& ker = *self.parents[1];
    detail::Node& dil = *self.parents[2];
    const ConstMatrixMap g(self.grad.data(), out_ch, length);
    const ConstMatrixMap w(ker.data.data(), out_ch, channels * taps);

    if (ker.requires_grad) {
      MatrixMap gw(ker.grad.data(), out_ch, channels * taps);
      if (taps == 1) {
        gw.noalias() += g * ConstMatrixMap(in.data.data(), channels, length).transpose();
      } else {
        gw.noalias() += g * detail::shifted_input(in.data, channels, length, shifts).transpose();
      }
    }
    if (!in.requires_grad && !dil.requires_grad) return;

    RowMatrix gx = w.transpose() * g;  // [channels * taps, length]
    const long len = static_cast<long>(length);
    double grad_d = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const double* xc = in.data.data() + c * length;
      double* dxc = in.requires_grad ? in.grad.data() + c * length : nullptr;
      for (std::size_t j = 0; j < taps; ++j) {
        const auto [offset, base, frac] = shifts[j];
        const double* row = gx.data() + (c * taps + j) * length;
        if (dxc) {
          const double w0 = 1.0 - frac;
          for (long t = 0; t < len; ++t) {
            const long i0 = t + base;
            if (i0 >= 0 && i0 < len) dxc[i0] += w0 * row[t];
            if (i0 + 1 >= 0 && i0 + 1 < len) dxc[i0 + 1] += frac * row[t];
          }
        }
        if (dil.requires_grad && offset != 0.0) {
          // d x_hat / d d = offset * (x[lo + 1] - x[lo]) on the active piece;
          // on a kink the piece to the left in d is taken.
          const long lo = (frac == 0.0 && offset > 0.0) ? base - 1 : base;
          double acc = 0.0;
          for (long t = 0; t < len; ++t) {
            const long i0 = t + lo;
            const double a = (i0 >= 0 && i0 < len) ? xc[i0] : 0.0;
            const double b = (i0 + 1 >= 0 && i0 + 1 < len) ? xc[i0 + 1] : 0.0;
            acc += row[t] * (b - a);
          }
          grad_d += offset * acc;
        }
      }
    }
    if (dil.requires_grad) dil.grad[0] += grad_d;
  };
  return Tensor::make_result({out_ch, length}, std::move(out), {input, kernel, dilation},
                             std::move(backward_fn));
}

inline Tensor conv1d_frac(const Tensor& input, const Tensor& kernel, const DilationParam& dilation,
                          Padding padding = Padding::same) {
  if (!(dilation.rate() >= dilation.d_min && dilation.rate() <= dilation.d_max)) {
    throw Error(ErrorCode::invalid_argument, "conv1d_frac: dilation " +
                                                 std::to_string(dilation.rate()) + " out of bounds");
  }
  return conv1d_frac(input, kernel, dilation.value, padding);
}

inline Tensor conv1d_frac(const Tensor& input, const Tensor& kernel, double dilation,
                          Padding padding = Padding::same) {
  return conv1d_frac(input, kernel, Tensor::scalar(dilation), padding);
}

// Pointwise (1x1) convolution.
inline Tensor conv1x1(const Tensor& input, const Tensor& kernel) {
  return conv1d_frac(input, kernel, 1.0);
}

/// tanh(filter) * sigmoid(gate), elementwise.
inline Tensor gated_unit(const Tensor& filter_in, const Tensor& gate_in) {
  detail::require_same_shape(filter_in, gate_in, "gated_unit");
  const auto f = filter_in.data();
  const auto g = gate_in.data();
  std::vector<double> out(f.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(f[i]) * detail::sigmoid(g[i]);
  return Tensor::make_result(filter_in.shape(), std::move(out), {filter_in, gate_in},
                             [](detail::Node& self) {
                               detail::Node& fn = *self.parents[0];
                               detail::Node& gn = *self.parents[1];
                               for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                 const double th = std::tanh(fn.data[i]);
                                 const double sg = detail::sigmoid(gn.data[i]);
                                 if (fn.requires_grad) fn.grad[i] += self.grad[i] * sg * (1.0 - th * th);
                                 if (gn.requires_grad) gn.grad[i] += self.grad[i] * th * sg * (1.0 - sg);
                               }
                             });
}

/// Mean of squared differences over all elements; target must be a constant.
inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  detail::require_same_shape(pred, target, "mse_loss");
  if (target.requires_grad()) {
    throw Error(ErrorCode::precondition, "mse_loss: target must not require grad");
  }
  const auto p = pred.data();
  const auto t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double e = p[i] - t[i];
    acc += e * e;
  }
  const double n = static_cast<double>(p.size());
  return Tensor::make_result({1}, {acc / n}, {pred, target}, [n](detail::Node& self) {
    detail::Node& pn = *self.parents[0];
    const detail::Node& tn = *self.parents[1];
    const double scale = 2.0 * self.grad[0] / n;
    for (std::size_t i = 0; i < pn.grad.size(); ++i) pn.grad[i] += scale * (pn.data[i] - tn.data[i]);
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (auto& parent : self.parents) {
      if (!parent->requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) parent->grad[i] += self.grad[i];
    }
  });
}

// x: [channels, time], bias: [channels]
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.shape().size() != 2 || bias.shape() != Shape{x.dim(0)}) {
    throw Error(ErrorCode::shape_mismatch,
                "add_bias: " + shape_string(x.shape()) + " with bias " + shape_string(bias.shape()));
  }
  const std::size_t channels = x.dim(0), length = x.dim(1);
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t c = 0; c < channels; ++c) {
    const double b = bias.data()[c];
    for (std::size_t t = 0; t < length; ++t) out[c * length + t] += b;
  }
  return Tensor::make_result(x.shape(), std::move(out), {x, bias},
                             [channels, length](detail::Node& self) {
                               detail::Node& xn = *self.parents[0];
                               detail::Node& bn = *self.parents[1];
                               if (xn.requires_grad) {
                                 for (std::size_t i = 0; i < self.grad.size(); ++i) xn.grad[i] += self.grad[i];
                               }
                               if (bn.requires_grad) {
                                 for (std::size_t c = 0; c < channels; ++c) {
                                   double acc = 0.0;
                                   for (std::size_t t = 0; t < length; ++t) acc += self.grad[c * length + t];
                                   bn.grad[c] += acc;
                                 }
                               }
                             });
}

inline Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto v = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
  return Tensor::make_result(x.shape(), std::move(out), {x}, [](detail::Node& self) {
    detail::Node& xn = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (xn.data[i] > 0.0) xn.grad[i] += self.grad[i];
    }
  });
}

inline Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.size());
  const auto v = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * v[i];
  return Tensor::make_result(x.shape(), std::move(out), {x}, [factor](detail::Node& self) {
    detail::Node& xn = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn.grad[i] += factor * self.grad[i];
  });
}

/// Scalar sum(x * weights) with constant weights; turns any op output into a
/// loss for gradient checks.
inline Tensor weighted_sum(const Tensor& x, const Tensor& weights) {
  detail::require_same_shape(x, weights, "weighted_sum");
  const auto v = x.data();
  const auto w = weights.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) acc += v[i] * w[i];
  return Tensor::make_result({1}, {acc}, {x, weights}, [](detail::Node& self) {
    detail::Node& xn = *self.parents[0];
    detail::Node& wn = *self.parents[1];
    for (std::size_t i = 0; i < xn.grad.size(); ++i) {
      if (xn.requires_grad) xn.grad[i] += self.grad[0] * wn.data[i];
      if (wn.requires_grad) wn.grad[i] += self.grad[0] * xn.data[i];
    }
  });
}

}  // namespace rfsep::ad
