#pragma once

#include <cmath>
#include <vector>

#include "dtts/signal/mel.hpp"
#include "dtts/signal/stft.hpp"

namespace dtts::signal {

namespace detail {

// Non-negative inversion of the mel filterbank by multiplicative updates
// (Lee-Seung for || p - fb s ||^2, s >= 0). Keeps the linear-power target
// consistent with the requested mel, which the clamped pseudo-inverse is not.
inline MatD mel_to_linear_power(const MatD& mel_power) {
  const MatD& fb = mel_filterbank();
  MatD s = (mel_power * fb).cwiseMax(1e-12);  // T x 641 transpose init
  const MatD fbt_fb = fb.transpose() * fb;    // 641 x 641
  for (int it = 0; it < 30; ++it) {
    MatD denom = (s * fbt_fb).cwiseMax(1e-12);
    MatD numer = mel_power * fb;
    s = s.cwiseProduct(numer.cwiseQuotient(denom));
  }
  return s;
}

}  // namespace detail

// Iterative phase reconstruction from a log-power mel spectrogram.
// Deterministic: the phase is initialized to zero.
inline Waveform griffin_lim(const MelSpectrogram& mel, int iters = 32) {
  if (iters < 1) throw ConfigError("griffin_lim: iters must be >= 1");
  require(mel.frames.cols() == kMelBins, "griffin_lim: expected 80 mel bins");

  const Eigen::Index t_count = mel.frames.rows();
  MatD mel_power = mel.frames.array().exp().matrix();
  MatD target_mag = detail::mel_to_linear_power(mel_power).cwiseSqrt();

  const size_t out_len = static_cast<size_t>(t_count - 1) * kHopLength;
  CMatD spec = target_mag.cast<std::complex<double>>();
  std::vector<double> x;
  for (int it = 0; it < iters; ++it) {
    x = istft(spec, std::max<size_t>(out_len, 1));
    CMatD re = stft(Waveform{x, kSampleRate});
    for (Eigen::Index t = 0; t < t_count && t < re.rows(); ++t)
      for (int k = 0; k < kFftBins; ++k) {
        const double m = std::abs(re(t, k));
        spec(t, k) = m > 1e-12 ? re(t, k) / m * target_mag(t, k)
                               : std::complex<double>(target_mag(t, k), 0.0);
      }
  }
  x = istft(spec, std::max<size_t>(out_len, 1));
  return Waveform{std::move(x), kSampleRate};
}

}  // namespace dtts::signal
