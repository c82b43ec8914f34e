#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "dtts/common.hpp"

namespace dtts::signal {

namespace detail {

inline double sinc(double x) {
  if (std::fabs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace detail

// Windowed-sinc resampling by an arbitrary length ratio (out/in). The kernel
// cutoff tracks min(1, ratio) to anti-alias when shrinking the spectrum.
inline std::vector<double> resample(const std::vector<double>& x, double ratio) {
  if (ratio == 1.0) return x;
  const int n = static_cast<int>(x.size());
  const int out_n = std::max(1, static_cast<int>(std::llround(n * ratio)));
  const double cutoff = std::min(1.0, ratio);
  const double half = 32.0 / cutoff;

  std::vector<double> out(static_cast<size_t>(out_n), 0.0);
  for (int j = 0; j < out_n; ++j) {
    const double t = j / ratio;
    const int m0 = std::max(0, static_cast<int>(std::ceil(t - half)));
    const int m1 = std::min(n - 1, static_cast<int>(std::floor(t + half)));
    double acc = 0.0;
    for (int m = m0; m <= m1; ++m) {
      const double u = t - m;
      const double w = 0.5 + 0.5 * std::cos(std::numbers::pi * u / half);
      acc += x[static_cast<size_t>(m)] * cutoff * detail::sinc(cutoff * u) * w;
    }
    out[static_cast<size_t>(j)] = acc;
  }
  return out;
}

}  // namespace dtts::signal
