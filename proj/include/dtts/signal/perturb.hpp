#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "dtts/rng.hpp"
#include "dtts/signal/resample.hpp"
#include "dtts/signal/stft.hpp"

namespace dtts::signal {

// Speaker-information perturbation: pitch randomization, formant shifting,
// and random frequency shaping, applied in that order. Ratio ranges have
// lower bound >= 1; a coin flip decides shift direction.
struct PerturbConfig {
  double pitch_ratio_lo = 1.0, pitch_ratio_hi = 2.0;
  double formant_ratio_lo = 1.0, formant_ratio_hi = 1.4;
  int eq_band_count = 8;
  double eq_gain_db_lo = -12.0, eq_gain_db_hi = 12.0;
  uint64_t seed = 0;

  void validate() const {
    if (pitch_ratio_lo < 1.0 || formant_ratio_lo < 1.0)
      throw ConfigError("perturb: ratio ranges must have lower bound >= 1");
    if (pitch_ratio_hi < pitch_ratio_lo || formant_ratio_hi < formant_ratio_lo ||
        eq_gain_db_hi < eq_gain_db_lo)
      throw ConfigError("perturb: empty range");
    if (eq_band_count < 1) throw ConfigError("perturb: eq_band_count must be >= 1");
  }
};

namespace detail {

inline double princarg(double phase) {
  return phase - 2.0 * std::numbers::pi *
                     std::round(phase / (2.0 * std::numbers::pi));
}

// Phase-vocoder time stretch to (approximately) target_len samples. Frames
// are centered with reflection padding, mirroring the stft geometry, and the
// synthesis hop is fixed, so stretch factor 1 reduces to the exact
// analysis/synthesis round trip. Output is trimmed or zero-padded to
// target_len exactly.
inline std::vector<double> pv_stretch(const std::vector<double>& x, size_t target_len) {
  const int hop_syn = kHopLength;
  const int pad = kWinLength / 2;
  std::vector<double> in = x;
  if (in.size() < 2) in.resize(2, 0.0);
  const double s = static_cast<double>(target_len) / static_cast<double>(in.size());
  const int hop_ana = std::max(1, static_cast<int>(std::llround(hop_syn / s)));

  const std::vector<double> padded = reflect_pad(in, pad);
  // Enough frames to cover the stretched signal past target_len + pad.
  const int frames =
      static_cast<int>((padded.size() - kWinLength) / static_cast<size_t>(hop_ana)) + 1;

  const std::vector<double> win = hann_periodic(kWinLength);
  Eigen::FFT<double> fft;
  std::vector<double> frame(kFftSize);
  std::vector<std::complex<double>> bins;
  std::vector<double> syn_phase(kFftBins, 0.0), prev_phase(kFftBins, 0.0);

  const size_t out_full = static_cast<size_t>(frames - 1) * hop_syn + kWinLength;
  std::vector<double> acc(out_full, 0.0), norm(out_full, 0.0);
  std::vector<std::complex<double>> full(kFftSize), time(kFftSize);

  for (int t = 0; t < frames; ++t) {
    const double* src = padded.data() + static_cast<size_t>(t) * hop_ana;
    for (int i = 0; i < kWinLength; ++i) frame[static_cast<size_t>(i)] = src[i] * win[i];
    fft.fwd(bins, frame);

    for (int k = 0; k < kFftBins; ++k) {
      const double mag = std::abs(bins[static_cast<size_t>(k)]);
      const double phase = std::arg(bins[static_cast<size_t>(k)]);
      const double omega = 2.0 * std::numbers::pi * k / kFftSize;
      if (t == 0) {
        syn_phase[static_cast<size_t>(k)] = phase;
      } else {
        const double dev = princarg(phase - prev_phase[static_cast<size_t>(k)] -
                                    omega * hop_ana);
        const double inst = omega + dev / hop_ana;
        syn_phase[static_cast<size_t>(k)] += inst * hop_syn;
      }
      prev_phase[static_cast<size_t>(k)] = phase;
      full[static_cast<size_t>(k)] =
          std::polar(mag, syn_phase[static_cast<size_t>(k)]);
    }
    for (int k = kFftBins; k < kFftSize; ++k)
      full[static_cast<size_t>(k)] = std::conj(full[static_cast<size_t>(kFftSize - k)]);

    fft.inv(time, full);
    const size_t base = static_cast<size_t>(t) * hop_syn;
    for (int i = 0; i < kWinLength; ++i) {
      acc[base + i] += time[static_cast<size_t>(i)].real() * win[i];
      norm[base + i] += win[i] * win[i];
    }
  }

  // The leading pad stretches with the signal.
  const size_t start =
      static_cast<size_t>(std::llround(static_cast<double>(pad) * hop_syn / hop_ana));
  std::vector<double> out(target_len, 0.0);
  for (size_t i = 0; i < target_len; ++i) {
    const size_t j = i + start;
    if (j < out_full && norm[j] > 1e-9) out[i] = acc[j] / norm[j];
  }
  return out;
}

// Cepstrally smoothed log-magnitude envelope of one 641-bin frame.
inline void spectral_envelope(Eigen::FFT<double>& fft,
                              const std::vector<double>& log_mag,
                              std::vector<double>& env) {
  constexpr int kLifter = 64;
  std::vector<std::complex<double>> spectrum(kFftSize), ceps(kFftSize);
  for (int k = 0; k < kFftBins; ++k) {
    spectrum[static_cast<size_t>(k)] = log_mag[static_cast<size_t>(k)];
    if (k > 0 && k < kFftBins - 1)
      spectrum[static_cast<size_t>(kFftSize - k)] = log_mag[static_cast<size_t>(k)];
  }
  fft.inv(ceps, spectrum);
  for (int q = kLifter + 1; q < kFftSize - kLifter; ++q)
    ceps[static_cast<size_t>(q)] = 0.0;
  fft.fwd(spectrum, ceps);
  env.resize(kFftBins);
  for (int k = 0; k < kFftBins; ++k)
    env[static_cast<size_t>(k)] = spectrum[static_cast<size_t>(k)].real();
}

// Warp the spectral envelope along the frequency axis by `ratio` and apply
// the resulting gain to the magnitudes, keeping phases.
inline std::vector<double> formant_shift(const std::vector<double>& x, double ratio) {
  Waveform w{x, kSampleRate};
  CMatD spec = stft(w);
  Eigen::FFT<double> fft;
  std::vector<double> log_mag(kFftBins), env, warped(kFftBins);
  for (Eigen::Index t = 0; t < spec.rows(); ++t) {
    for (int k = 0; k < kFftBins; ++k)
      log_mag[static_cast<size_t>(k)] = std::log(std::max(std::abs(spec(t, k)), 1e-10));
    spectral_envelope(fft, log_mag, env);
    for (int k = 0; k < kFftBins; ++k) {
      const double pos = k / ratio;
      const int k0 = std::min(static_cast<int>(pos), kFftBins - 1);
      const int k1 = std::min(k0 + 1, kFftBins - 1);
      const double frac = pos - k0;
      warped[static_cast<size_t>(k)] = (1.0 - frac) * env[static_cast<size_t>(k0)] +
                                       frac * env[static_cast<size_t>(k1)];
    }
    for (int k = 0; k < kFftBins; ++k) {
      const double gain = std::exp(warped[static_cast<size_t>(k)] -
                                   env[static_cast<size_t>(k)]);
      spec(t, k) *= gain;
    }
  }
  return istft(spec, x.size());
}

// RBJ peaking biquad; 0 dB gain yields a bit-exact identity.
struct Biquad {
  double b0, b1, b2, a1, a2;
  double s1 = 0.0, s2 = 0.0;

  static Biquad peaking(double freq_hz, double gain_db, double q) {
    const double amp = std::pow(10.0, gain_db / 40.0);
    const double w0 = 2.0 * std::numbers::pi * freq_hz / kSampleRate;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha / amp;
    Biquad f{};
    f.b0 = (1.0 + alpha * amp) / a0;
    f.b1 = -2.0 * std::cos(w0) / a0;
    f.b2 = (1.0 - alpha * amp) / a0;
    f.a1 = -2.0 * std::cos(w0) / a0;
    f.a2 = (1.0 - alpha / amp) / a0;
    return f;
  }

  double tick(double x) {
    const double y = b0 * x + s1;
    s1 = b1 * x - a1 * y + s2;
    s2 = b2 * x - a2 * y;
    return y;
  }
};

inline double draw_ratio(double lo, double hi, RngStream& rng) {
  const double r = rng.uniform(lo, hi);
  return rng.coin() ? 1.0 / r : r;
}

}  // namespace detail

// Deterministic under a fixed stream; output has exactly the input length.
inline Waveform perturb(const Waveform& w, const PerturbConfig& cfg, RngStream& rng) {
  cfg.validate();
  require(!w.samples.empty(), "perturb: empty waveform");
  const size_t n = w.samples.size();

  // All random draws happen up front, in a fixed order, so the stream
  // position does not depend on intermediate signal content.
  const double pitch_ratio = detail::draw_ratio(cfg.pitch_ratio_lo, cfg.pitch_ratio_hi, rng);
  const double formant_ratio =
      detail::draw_ratio(cfg.formant_ratio_lo, cfg.formant_ratio_hi, rng);
  struct Band {
    double freq, gain_db, q;
  };
  std::vector<Band> bands(static_cast<size_t>(cfg.eq_band_count));
  for (auto& b : bands) {
    b.freq = std::exp(rng.uniform(std::log(100.0), std::log(7000.0)));
    b.gain_db = rng.uniform(cfg.eq_gain_db_lo, cfg.eq_gain_db_hi);
    b.q = rng.uniform(0.7, 2.0);
  }

  // Pitch randomization: resample then stretch back to the original length.
  std::vector<double> x = resample(w.samples, 1.0 / pitch_ratio);
  x = detail::pv_stretch(x, n);

  x = detail::formant_shift(x, formant_ratio);

  for (const auto& b : bands) {
    detail::Biquad f = detail::Biquad::peaking(b.freq, b.gain_db, b.q);
    for (double& v : x) v = f.tick(v);
  }

  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::fabs(v));
  if (peak > 1.0)
    for (double& v : x) v *= 0.999 / peak;

  return Waveform{std::move(x), kSampleRate};
}

inline Waveform perturb(const Waveform& w, const PerturbConfig& cfg) {
  RngStream rng(cfg.seed);
  return perturb(w, cfg, rng);
}

}  // namespace dtts::signal
