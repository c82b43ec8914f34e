#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "dtts/common.hpp"

namespace dtts::signal {

// Fixed analysis geometry: 16 kHz audio, 1280-sample periodic Hann window,
// hop 320, FFT size 1280 (641 positive-frequency bins), centered frames with
// reflection padding. One frame every 20 ms.
constexpr int kSampleRate = 16000;
constexpr int kWinLength = 1280;
constexpr int kHopLength = 320;
constexpr int kFftSize = 1280;
constexpr int kFftBins = kFftSize / 2 + 1;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;
};

using CMatD = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic,
                            Eigen::RowMajor>;

inline int frame_count(size_t num_samples) {
  return static_cast<int>(num_samples / kHopLength) + 1;
}

inline std::vector<double> hann_periodic(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

// Reflection padding without edge duplication; falls back to zeros when the
// signal is shorter than the pad.
inline std::vector<double> reflect_pad(const std::vector<double>& x, int pad) {
  const int n = static_cast<int>(x.size());
  std::vector<double> out(static_cast<size_t>(n) + 2 * pad, 0.0);
  for (int i = -pad; i < n + pad; ++i) {
    int src = i;
    if (src < 0) src = -src;
    if (src >= n) src = 2 * (n - 1) - src;
    if (src >= 0 && src < n) out[static_cast<size_t>(i + pad)] = x[static_cast<size_t>(src)];
  }
  return out;
}

// Complex spectrogram, T x 641. Deterministic function of the samples.
inline CMatD stft(const Waveform& w) {
  require(!w.samples.empty(), "stft: empty waveform");
  const int t_count = frame_count(w.samples.size());
  const std::vector<double> win = hann_periodic(kWinLength);
  const std::vector<double> padded = reflect_pad(w.samples, kWinLength / 2);

  CMatD spec(t_count, kFftBins);
  Eigen::FFT<double> fft;
  std::vector<double> frame(kFftSize);
  std::vector<std::complex<double>> bins;
  for (int t = 0; t < t_count; ++t) {
    const double* src = padded.data() + static_cast<size_t>(t) * kHopLength;
    for (int i = 0; i < kWinLength; ++i) frame[i] = src[i] * win[i];
    fft.fwd(bins, frame);
    for (int k = 0; k < kFftBins; ++k) spec(t, k) = bins[static_cast<size_t>(k)];
  }
  return spec;
}

// Weighted overlap-add inverse with squared-window normalization.
// Returns exactly out_len samples (the caller knows the frame geometry).
inline std::vector<double> istft(const CMatD& spec, size_t out_len) {
  const int t_count = static_cast<int>(spec.rows());
  require(spec.cols() == kFftBins, "istft: expected 641 bins");
  const std::vector<double> win = hann_periodic(kWinLength);
  const int pad = kWinLength / 2;
  const size_t full = static_cast<size_t>(t_count - 1) * kHopLength + kWinLength;

  std::vector<double> acc(full, 0.0), norm(full, 0.0);
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> full_bins(kFftSize);
  std::vector<std::complex<double>> time(kFftSize);
  for (int t = 0; t < t_count; ++t) {
    for (int k = 0; k < kFftBins; ++k) full_bins[static_cast<size_t>(k)] = spec(t, k);
    for (int k = kFftBins; k < kFftSize; ++k)
      full_bins[static_cast<size_t>(k)] = std::conj(spec(t, kFftSize - k));
    fft.inv(time, full_bins);
    size_t base = static_cast<size_t>(t) * kHopLength;
    for (int i = 0; i < kWinLength; ++i) {
      acc[base + i] += time[static_cast<size_t>(i)].real() * win[i];
      norm[base + i] += win[i] * win[i];
    }
  }
  std::vector<double> out(out_len, 0.0);
  for (size_t i = 0; i < out_len; ++i) {
    size_t j = i + pad;
    if (j < full && norm[j] > 1e-9) out[i] = acc[j] / norm[j];
  }
  return out;
}

}  // namespace dtts::signal
