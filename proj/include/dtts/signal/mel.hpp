#pragma once

#include <cmath>
#include <vector>

#include "dtts/signal/stft.hpp"

namespace dtts::signal {

constexpr int kMelBins = 80;
constexpr double kMelFmin = 0.0;
constexpr double kMelFmax = 8000.0;
constexpr double kLogFloor = 1e-10;

struct MelSpectrogram {
  MatD frames;  // T x 80, log power
};

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Triangular filters on the 2595*log10(1 + f/700) scale over 0..8 kHz,
// area-normalized so each filter integrates to the same energy.
inline const MatD& mel_filterbank() {
  static const MatD fb = [] {
    MatD m = MatD::Zero(kMelBins, kFftBins);
    const double mel_lo = hz_to_mel(kMelFmin);
    const double mel_hi = hz_to_mel(kMelFmax);
    std::vector<double> edges(kMelBins + 2);
    for (int i = 0; i < kMelBins + 2; ++i)
      edges[static_cast<size_t>(i)] =
          mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (kMelBins + 1));
    for (int b = 0; b < kMelBins; ++b) {
      const double f0 = edges[static_cast<size_t>(b)];
      const double f1 = edges[static_cast<size_t>(b) + 1];
      const double f2 = edges[static_cast<size_t>(b) + 2];
      const double norm = 2.0 / (f2 - f0);
      for (int k = 0; k < kFftBins; ++k) {
        const double f = static_cast<double>(k) * kSampleRate / kFftSize;
        double v = 0.0;
        if (f >= f0 && f <= f1 && f1 > f0)
          v = (f - f0) / (f1 - f0);
        else if (f > f1 && f <= f2 && f2 > f1)
          v = (f2 - f) / (f2 - f1);
        m(b, k) = v * norm;
      }
    }
    return m;
  }();
  return fb;
}

// Log-compressed mel energies: log(max(filterbank * |X|^2, 1e-10)).
inline MelSpectrogram mel_spectrogram(const Waveform& w) {
  const CMatD spec = stft(w);
  MatD power = spec.cwiseAbs2();
  MelSpectrogram mel;
  mel.frames = (power * mel_filterbank().transpose())
                   .array()
                   .max(kLogFloor)
                   .log()
                   .matrix();
  return mel;
}

// Per-frame mean over the 80 mel bins; the speaker-dependent energy track.
inline MatD frame_energy(const MelSpectrogram& m) {
  require(m.frames.cols() == kMelBins, "frame_energy: expected 80 mel bins");
  return m.frames.rowwise().mean();
}

}  // namespace dtts::signal
