#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dtts/signal/stft.hpp"

namespace dtts::signal {

struct PitchConfig {
  double f_min = 65.0;
  double f_max = 1000.0;
  double threshold = 0.15;  // absolute CMNDF threshold

  void validate() const {
    if (f_min >= f_max) throw ConfigError("pitch: f_min must be < f_max");
    if (f_min <= 0) throw ConfigError("pitch: f_min must be positive");
  }
};

// Deterministic YIN: cumulative-mean-normalized difference with an absolute
// threshold, parabolic interpolation, and 5-point median smoothing.
// Frames share the mel geometry (hop 320, centered), so the returned track
// has exactly frame_count(n) entries; 0 marks unvoiced frames.
inline MatD extract_pitch(const Waveform& w, const PitchConfig& cfg = {}) {
  cfg.validate();
  require(!w.samples.empty(), "extract_pitch: empty waveform");

  const int t_count = frame_count(w.samples.size());
  const std::vector<double> padded = reflect_pad(w.samples, kWinLength / 2);
  const int window = kWinLength / 2;  // integration window
  const int tau_max =
      std::min(window, static_cast<int>(std::ceil(kSampleRate / cfg.f_min)));
  const int tau_min =
      std::max(2, static_cast<int>(std::floor(kSampleRate / cfg.f_max)));

  std::vector<double> track(static_cast<size_t>(t_count), 0.0);
  std::vector<double> diff(static_cast<size_t>(tau_max) + 1, 0.0);
  std::vector<double> cmndf(static_cast<size_t>(tau_max) + 1, 1.0);

  for (int t = 0; t < t_count; ++t) {
    const double* x = padded.data() + static_cast<size_t>(t) * kHopLength;

    diff[0] = 0.0;
    double running = 0.0;
    for (int tau = 1; tau <= tau_max; ++tau) {
      double d = 0.0;
      for (int j = 0; j < window; ++j) {
        const double delta = x[j] - x[j + tau];
        d += delta * delta;
      }
      diff[static_cast<size_t>(tau)] = d;
      running += d;
      cmndf[static_cast<size_t>(tau)] =
          running > 0.0 ? d * tau / running : 1.0;
    }

    // First dip under the threshold, descended to its local minimum.
    int tau = -1;
    for (int c = tau_min; c <= tau_max; ++c) {
      if (cmndf[static_cast<size_t>(c)] < cfg.threshold) {
        tau = c;
        while (tau + 1 <= tau_max &&
               cmndf[static_cast<size_t>(tau) + 1] < cmndf[static_cast<size_t>(tau)])
          ++tau;
        break;
      }
    }
    if (tau < 0) continue;  // unvoiced

    double refined = static_cast<double>(tau);
    if (tau > tau_min && tau < tau_max) {
      const double a = cmndf[static_cast<size_t>(tau) - 1];
      const double b = cmndf[static_cast<size_t>(tau)];
      const double c = cmndf[static_cast<size_t>(tau) + 1];
      const double denom = a - 2 * b + c;
      if (std::fabs(denom) > 1e-12) refined += 0.5 * (a - c) / denom;
    }
    const double f0 = kSampleRate / refined;
    if (f0 >= cfg.f_min && f0 <= cfg.f_max) track[static_cast<size_t>(t)] = f0;
  }

  // 5-point median over the raw track (zeros included), edges clamped.
  MatD out(t_count, 1);
  std::vector<double> win;
  for (int t = 0; t < t_count; ++t) {
    win.clear();
    for (int j = t - 2; j <= t + 2; ++j) {
      const int c = std::clamp(j, 0, t_count - 1);
      win.push_back(track[static_cast<size_t>(c)]);
    }
    std::nth_element(win.begin(), win.begin() + 2, win.end());
    out(t, 0) = win[2];
  }
  return out;
}

}  // namespace dtts::signal
