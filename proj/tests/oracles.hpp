#pragma once

// Reference implementations that share no code with the library. Tests
// compare library output against these.

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

// Plain nested-loop dilated convolution with centered taps and zero padding.
// x is [C][T] row-major, kernel is [O][C][K].
inline std::vector<double> integer_dilated_conv(const std::vector<double>& x, std::size_t C, std::size_t T,
                                                const std::vector<double>& kernel, std::size_t O, std::size_t K,
                                                long d) {
  std::vector<double> out(O * T, 0.0);
  const long half = static_cast<long>(K / 2);
  for (std::size_t o = 0; o < O; ++o) {
    for (std::size_t t = 0; t < T; ++t) {
      double acc = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t j = 0; j < K; ++j) {
          const long idx = static_cast<long>(t) + (static_cast<long>(j) - half) * d;
          if (idx < 0 || idx >= static_cast<long>(T)) continue;
          acc += kernel[(o * C + c) * K + j] * x[c * T + static_cast<std::size_t>(idx)];
        }
      }
      out[o * T + t] = acc;
    }
  }
  return out;
}

// Materializes each channel on a grid of spacing 1/G by linear interpolation
// between integer samples (zeros outside), then reads taps off the grid.
// Exact whenever every tap position m*d is a multiple of 1/G.
inline std::vector<double> fine_grid_conv(const std::vector<double>& x, std::size_t C, std::size_t T,
                                          const std::vector<double>& kernel, std::size_t O, std::size_t K, double d,
                                          long G) {
  const long pad = static_cast<long>(std::ceil(static_cast<double>(K) * d)) + 2;
  const long lo = -pad, hi = static_cast<long>(T) + pad;
  const long n_grid = (hi - lo) * G + 1;
  auto sample = [&](std::size_t c, long i) -> double {
    return (i < 0 || i >= static_cast<long>(T)) ? 0.0 : x[c * T + static_cast<std::size_t>(i)];
  };
  std::vector<std::vector<double>> grid(C, std::vector<double>(static_cast<std::size_t>(n_grid)));
  for (std::size_t c = 0; c < C; ++c) {
    for (long g = 0; g < n_grid; ++g) {
      const long whole = lo + g / G;
      const double w = static_cast<double>(g % G) / static_cast<double>(G);
      grid[c][static_cast<std::size_t>(g)] = (1.0 - w) * sample(c, whole) + w * sample(c, whole + 1);
    }
  }
  std::vector<double> out(O * T, 0.0);
  const long half = static_cast<long>(K / 2);
  for (std::size_t o = 0; o < O; ++o) {
    for (std::size_t t = 0; t < T; ++t) {
      double acc = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t j = 0; j < K; ++j) {
          const double pos = static_cast<double>(t) + static_cast<double>(static_cast<long>(j) - half) * d;
          const long g = std::lround((pos - static_cast<double>(lo)) * static_cast<double>(G));
          acc += kernel[(o * C + c) * K + j] * grid[c][static_cast<std::size_t>(g)];
        }
      }
      out[o * T + t] = acc;
    }
  }
  return out;
}

// Central difference of a scalar function of one coordinate.
inline double central_difference(const std::function<double(double)>& f, double at, double h) {
  return (f(at + h) - f(at - h)) / (2.0 * h);
}

inline std::vector<double> uniform_vector(std::mt19937_64& gen, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& e : v) e = dist(gen);
  return v;
}

}  // namespace oracle
