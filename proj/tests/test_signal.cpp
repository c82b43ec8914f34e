#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "dsp_helpers.hpp"
#include "dtts/rng.hpp"
#include "dtts/signal/griffin_lim.hpp"
#include "dtts/signal/mel.hpp"
#include "dtts/signal/perturb.hpp"
#include "dtts/signal/pitch.hpp"
#include "dtts/signal/records.hpp"
#include "dtts/signal/wav.hpp"

using namespace dtts;
using namespace dtts::signal;
using test::dominant_freq;
using test::rms;
using test::sine;

namespace {

Waveform noise(double seconds, uint64_t seed, double amp = 0.3) {
  RngStream rng(seed);
  const int n = static_cast<int>(seconds * kSampleRate);
  std::vector<double> s(static_cast<size_t>(n));
  for (auto& v : s) v = amp * (2.0 * rng.uniform() - 1.0);
  return {std::move(s), kSampleRate};
}

}  // namespace

TEST(Stft, ZeroSignalAllZeroFrames) {
  Waveform w{std::vector<double>(1280, 0.0), kSampleRate};
  CMatD spec = stft(w);
  EXPECT_EQ(spec.rows(), frame_count(1280));
  EXPECT_NEAR(spec.cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(Stft, SinePeakBin) {
  // 500 Hz at 16 kHz with a 1280-point FFT lands on bin 500*1280/16000 = 40.
  CMatD spec = stft(sine(500.0, 1.0));
  Eigen::Index mid = spec.rows() / 2;
  int peak = 0;
  for (int k = 1; k < kFftBins; ++k)
    if (std::abs(spec(mid, k)) > std::abs(spec(mid, peak))) peak = k;
  EXPECT_EQ(peak, 40);
}

TEST(Stft, FrameCountStep) {
  Waveform a{std::vector<double>(1280, 0.1), kSampleRate};
  Waveform b{std::vector<double>(1281, 0.1), kSampleRate};
  EXPECT_LE(std::abs(stft(b).rows() - stft(a).rows()), 1);
}

TEST(Stft, EmptyInputThrows) {
  Waveform w;
  EXPECT_THROW(stft(w), InputError);
}

TEST(Stft, RoundTripIdentity) {
  Waveform w = noise(0.4, 11);
  CMatD spec = stft(w);
  std::vector<double> back = istft(spec, w.samples.size());
  double err = 0;
  for (size_t i = 0; i < w.samples.size(); ++i)
    err = std::max(err, std::fabs(back[i] - w.samples[i]));
  EXPECT_LT(err, 1e-10);
}

TEST(Mel, SilenceHitsLogFloor) {
  Waveform w{std::vector<double>(8000, 0.0), kSampleRate};
  MelSpectrogram m = mel_spectrogram(w);
  EXPECT_TRUE((m.frames.array() == std::log(kLogFloor)).all());
}

TEST(Mel, Deterministic) {
  Waveform w = noise(0.5, 3);
  MelSpectrogram a = mel_spectrogram(w);
  MelSpectrogram b = mel_spectrogram(w);
  EXPECT_TRUE(a.frames == b.frames);
}

TEST(Mel, MatchesFilterbankTimesPowerOracle) {
  // Broadband impulse train; recompute mel energies by direct summation.
  std::vector<double> s(6400, 0.0);
  for (size_t i = 0; i < s.size(); i += 160) s[i] = 0.9;
  Waveform w{s, kSampleRate};
  CMatD spec = stft(w);
  MelSpectrogram m = mel_spectrogram(w);
  const MatD& fb = mel_filterbank();
  for (Eigen::Index t = 0; t < spec.rows(); t += 3)
    for (int b = 0; b < kMelBins; b += 7) {
      double acc = 0;
      for (int k = 0; k < kFftBins; ++k) acc += fb(b, k) * std::norm(spec(t, k));
      EXPECT_NEAR(m.frames(t, b), std::log(std::max(acc, kLogFloor)), 1e-9);
    }
}

TEST(FrameEnergy, ConstantAndSingleBin) {
  MelSpectrogram m;
  m.frames = MatD::Ones(3, kMelBins);
  EXPECT_DOUBLE_EQ(frame_energy(m)(0, 0), 1.0);

  m.frames.setZero();
  m.frames(1, 17) = 80.0;
  EXPECT_DOUBLE_EQ(frame_energy(m)(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(frame_energy(m)(0, 0), 0.0);
}

TEST(FrameEnergy, MatchesRowMeanOracle) {
  RngStream rng(5);
  MelSpectrogram m;
  m.frames.resize(12, kMelBins);
  for (Eigen::Index i = 0; i < m.frames.size(); ++i)
    m.frames(i) = rng.uniform(-20.0, 5.0);
  MatD e = frame_energy(m);
  for (Eigen::Index t = 0; t < 12; ++t) {
    double acc = 0;
    for (int b = 0; b < kMelBins; ++b) acc += m.frames(t, b);
    EXPECT_DOUBLE_EQ(e(t, 0), acc / kMelBins);
  }
}

TEST(Pitch, SineTracksWithinOnePercent) {
  for (double f : {110.0, 220.0, 440.0}) {
    MatD track = extract_pitch(sine(f, 1.0));
    int voiced = 0, good = 0;
    for (Eigen::Index t = 0; t < track.rows(); ++t) {
      if (track(t, 0) <= 0) continue;
      ++voiced;
      if (std::fabs(track(t, 0) - f) / f < 0.01) ++good;
    }
    EXPECT_GT(voiced, track.rows() / 2) << f;
    EXPECT_GE(static_cast<double>(good) / voiced, 0.95) << f;
  }
}

TEST(Pitch, MedianVoicedNearTarget) {
  MatD track = extract_pitch(sine(220.0, 1.0));
  std::vector<double> voiced;
  for (Eigen::Index t = 0; t < track.rows(); ++t)
    if (track(t, 0) > 0) voiced.push_back(track(t, 0));
  ASSERT_FALSE(voiced.empty());
  std::nth_element(voiced.begin(), voiced.begin() + voiced.size() / 2, voiced.end());
  EXPECT_NEAR(voiced[voiced.size() / 2], 220.0, 2.2);
}

TEST(Pitch, SilenceIsUnvoiced) {
  Waveform w{std::vector<double>(16000, 0.0), kSampleRate};
  MatD track = extract_pitch(w);
  EXPECT_NEAR(track.cwiseAbs().maxCoeff(), 0.0, 0.0);
}

TEST(Pitch, NoOctaveErrorWithWeakThirdHarmonic) {
  Waveform w = sine(110.0, 1.0, 0.5);
  Waveform h = sine(330.0, 1.0, 0.1);
  for (size_t i = 0; i < w.samples.size(); ++i) w.samples[i] += h.samples[i];
  MatD track = extract_pitch(w);
  std::vector<double> voiced;
  for (Eigen::Index t = 0; t < track.rows(); ++t)
    if (track(t, 0) > 0) voiced.push_back(track(t, 0));
  ASSERT_FALSE(voiced.empty());
  std::nth_element(voiced.begin(), voiced.begin() + voiced.size() / 2, voiced.end());
  EXPECT_NEAR(voiced[voiced.size() / 2], 110.0, 2.0);
}

TEST(Pitch, BadConfigThrows) {
  PitchConfig cfg;
  cfg.f_min = 500;
  cfg.f_max = 100;
  EXPECT_THROW(extract_pitch(sine(220.0, 0.2), cfg), ConfigError);
}

TEST(FrameGeometry, PitchEnergyMelAgreeOnT) {
  for (double secs : {0.31, 0.5, 0.77}) {
    Waveform w = sine(180.0, secs);
    MelSpectrogram m = mel_spectrogram(w);
    MatD p = extract_pitch(w);
    MatD e = frame_energy(m);
    EXPECT_EQ(m.frames.rows(), p.rows());
    EXPECT_EQ(m.frames.rows(), e.rows());
    EXPECT_EQ(m.frames.rows(), frame_count(w.samples.size()));
  }
}

TEST(Perturb, IdentityConfigIsNearNoop) {
  PerturbConfig cfg;
  cfg.pitch_ratio_lo = cfg.pitch_ratio_hi = 1.0;
  cfg.formant_ratio_lo = cfg.formant_ratio_hi = 1.0;
  cfg.eq_gain_db_lo = cfg.eq_gain_db_hi = 0.0;
  Waveform w = sine(200.0, 0.6, 0.6);
  RngStream rng(9);
  Waveform out = perturb(w, cfg, rng);
  ASSERT_EQ(out.samples.size(), w.samples.size());
  double err = 0;
  for (size_t i = 0; i < w.samples.size(); ++i)
    err = std::max(err, std::fabs(out.samples[i] - w.samples[i]));
  EXPECT_LT(err, 1e-3);
}

TEST(Perturb, DeterministicUnderSeed) {
  PerturbConfig cfg;
  cfg.seed = 1234;
  Waveform w = noise(0.5, 7);
  Waveform a = perturb(w, cfg);
  Waveform b = perturb(w, cfg);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (size_t i = 0; i < a.samples.size(); ++i)
    ASSERT_EQ(a.samples[i], b.samples[i]) << i;
}

TEST(Perturb, PitchRatioShiftsDominantFrequency) {
  PerturbConfig cfg;
  cfg.pitch_ratio_lo = cfg.pitch_ratio_hi = 1.5;
  cfg.formant_ratio_lo = cfg.formant_ratio_hi = 1.0;
  cfg.eq_gain_db_lo = cfg.eq_gain_db_hi = 0.0;
  Waveform w = sine(200.0, 1.0, 0.6);
  // Coin flip may invert the ratio; force the non-inverted branch by trying
  // streams until the first draw keeps direction, then measure.
  for (uint64_t seed = 0;; ++seed) {
    RngStream probe(seed);
    probe.uniform();
    const bool inverted = probe.coin();
    RngStream rng(seed);
    Waveform out = perturb(w, cfg, rng);
    EXPECT_EQ(out.samples.size(), w.samples.size());
    const double f = dominant_freq(out.samples);
    if (!inverted) {
      EXPECT_NEAR(f, 300.0, 6.0);
      break;
    }
    EXPECT_NEAR(f, 200.0 / 1.5, 4.0);
  }
}

TEST(Perturb, BadConfigThrows) {
  PerturbConfig cfg;
  cfg.pitch_ratio_lo = 0.5;
  RngStream rng(1);
  EXPECT_THROW(perturb(sine(200, 0.2), cfg, rng), ConfigError);
  PerturbConfig cfg2;
  cfg2.eq_band_count = 0;
  EXPECT_THROW(perturb(sine(200, 0.2), cfg2, rng), ConfigError);
}

TEST(GriffinLim, RecoversSineFrequency) {
  MelSpectrogram mel = mel_spectrogram(sine(440.0, 1.0, 0.6));
  Waveform out = griffin_lim(mel, 32);
  EXPECT_NEAR(dominant_freq(out.samples), 440.0, 10.0);
}

TEST(GriffinLim, SilenceStaysQuiet) {
  MelSpectrogram mel;
  mel.frames = MatD::Constant(40, kMelBins, std::log(kLogFloor));
  Waveform out = griffin_lim(mel, 8);
  EXPECT_LT(rms(out.samples), 1e-3);
}

TEST(GriffinLim, MoreItersDoNotIncreaseMelError) {
  MelSpectrogram mel = mel_spectrogram(sine(330.0, 0.6, 0.5));
  auto mel_l1 = [&](int iters) {
    Waveform out = griffin_lim(mel, iters);
    MelSpectrogram re = mel_spectrogram(out);
    Eigen::Index t = std::min(re.frames.rows(), mel.frames.rows());
    return (re.frames.topRows(t) - mel.frames.topRows(t)).cwiseAbs().mean();
  };
  double e1 = mel_l1(1);
  double e32 = mel_l1(32);
  EXPECT_LE(e32, e1 + 1e-9);
}

TEST(GriffinLim, BadItersThrows) {
  MelSpectrogram mel;
  mel.frames = MatD::Zero(4, kMelBins);
  EXPECT_THROW(griffin_lim(mel, 0), ConfigError);
}

TEST(Records, RoundTripBitExact) {
  MatF m(5, 7);
  RngStream rng(3);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m(i) = static_cast<float>(rng.uniform(-4, 4));
  const std::string path = "/tmp/dtts_test_record.bin";
  write_record(path, m);
  MatF back = read_record(path);
  ASSERT_EQ(back.rows(), 5);
  ASSERT_EQ(back.cols(), 7);
  EXPECT_TRUE((back.array() == m.array()).all());
  std::remove(path.c_str());
}

TEST(Records, TruncatedFileThrows) {
  const std::string path = "/tmp/dtts_test_trunc.bin";
  write_record(path, MatF::Ones(6, 6));
  std::filesystem::resize_file(path, 40);
  EXPECT_THROW(read_record(path), IoError);
  std::remove(path.c_str());
}

TEST(Wav, SaveLoadRoundTrip) {
  Waveform w = sine(250.0, 0.3, 0.4);
  const std::string path = "/tmp/dtts_test_wav.wav";
  save_wav(path, w);
  Waveform back = load_wav(path);
  ASSERT_EQ(back.samples.size(), w.samples.size());
  EXPECT_EQ(back.sample_rate, kSampleRate);
  double err = 0;
  for (size_t i = 0; i < w.samples.size(); ++i)
    err = std::max(err, std::fabs(back.samples[i] - w.samples[i]));
  EXPECT_LT(err, 1.0 / 32000.0);
  std::remove(path.c_str());
}

TEST(Wav, MissingFileThrows) { EXPECT_THROW(load_wav("/tmp/nope_dtts.wav"), IoError); }

TEST(Resample, PreservesToneFrequency) {
  // Downsample a 400 Hz tone of 48 kHz material to 16 kHz.
  const int n = 48000;
  std::vector<double> s(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    s[static_cast<size_t>(i)] = 0.5 * std::sin(2.0 * std::numbers::pi * 400.0 * i / 48000.0);
  std::vector<double> out = resample(s, 16000.0 / 48000.0);
  EXPECT_NEAR(static_cast<double>(out.size()), 16000.0, 2.0);
  EXPECT_NEAR(dominant_freq(out), 400.0, 2.0);
}
