#pragma once

#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "dtts/corpus/manifest.hpp"
#include "dtts/rng.hpp"
#include "dtts/signal/wav.hpp"

namespace dtts::corpus {

// Synthetic corpus: two pseudo-languages with disjoint six-symbol phone
// inventories, two speakers each. Utterances are harmonic vowel-like
// signals; each phone has fixed formants, a fixed loudness and a fixed
// pitch offset relative to the speaker's base f0, so language-dependent
// rise/fall patterns are a deterministic function of the token sequence.
struct ToyConfig {
  int utterances = 32;
  uint64_t seed = 1;
  int min_phones = 5;
  int max_phones = 7;
  double min_phone_sec = 0.09;
  double max_phone_sec = 0.17;
};

namespace toy_detail {

struct Phone {
  const char* symbol;
  double f1, f2;      // formant centers, Hz
  double amp;         // relative loudness
  double pitch_off;   // fractional f0 offset
};

inline const std::vector<Phone>& inventory(int lang) {
  static const std::vector<Phone> lang0 = {
      {"a", 700, 1220, 0.95, 0.12}, {"e", 530, 1840, 0.80, -0.08},
      {"i", 300, 2290, 0.70, 0.22}, {"o", 570, 840, 0.85, -0.18},
      {"u", 330, 870, 0.72, 0.02},  {"m", 280, 1350, 0.45, -0.25},
  };
  static const std::vector<Phone> lang1 = {
      {"ɑ", 750, 1090, 0.95, 0.18}, {"ɛ", 610, 1900, 0.78, -0.14},
      {"ɪ", 390, 1990, 0.70, 0.25}, {"ɔ", 500, 700, 0.85, -0.22},
      {"ʊ", 440, 1020, 0.74, 0.05}, {"n", 320, 1450, 0.42, -0.10},
  };
  return lang == 0 ? lang0 : lang1;
}

struct Speaker {
  int lang;
  double base_f0;
  double formant_scale;
};

inline const std::vector<Speaker>& speakers() {
  static const std::vector<Speaker> s = {
      {0, 115.0, 1.00}, {0, 215.0, 1.12}, {1, 145.0, 0.95}, {1, 265.0, 1.08}};
  return s;
}

inline double formant_gain(double freq, const Phone& p, double scale) {
  const double b = 120.0;
  auto lobe = [&](double center) {
    const double d = (freq - center * scale) / b;
    return 1.0 / (1.0 + d * d);
  };
  return lobe(p.f1) + 0.7 * lobe(p.f2) + 0.02;
}

}  // namespace toy_detail

struct ToyCorpus {
  CorpusManifest manifest;
  Vocabulary vocab;
  std::vector<std::string> probe_lines;  // "lang<TAB>tokens" for diagnostics
};

inline ToyCorpus generate_toy_corpus(const std::string& dir, const ToyConfig& cfg = {}) {
  namespace fs = std::filesystem;
  using namespace toy_detail;
  fs::create_directories(dir + "/wav");

  ToyCorpus out;
  for (int lang = 0; lang < 2; ++lang)
    for (const auto& p : inventory(lang)) out.vocab.add(p.symbol);

  const int sr = signal::kSampleRate;
  for (int n = 0; n < cfg.utterances; ++n) {
    RngStream rng = RngStream::derive(cfg.seed, {0x746f79ULL, static_cast<uint64_t>(n)});
    const int spk = n % static_cast<int>(speakers().size());
    const Speaker& speaker = speakers()[static_cast<size_t>(spk)];
    const auto& phones = inventory(speaker.lang);

    const int count = cfg.min_phones +
                      static_cast<int>(rng.uniform_index(
                          static_cast<uint64_t>(cfg.max_phones - cfg.min_phones + 1)));
    std::vector<int> seq;
    for (int i = 0; i < count; ++i) {
      int pick;
      do {
        pick = static_cast<int>(rng.uniform_index(phones.size()));
      } while (i > 0 && pick == seq.back());
      seq.push_back(pick);
    }

    std::vector<double> durations;
    double total_sec = 0;
    for (int i = 0; i < count; ++i) {
      double d = rng.uniform(cfg.min_phone_sec, cfg.max_phone_sec);
      durations.push_back(d);
      total_sec += d;
    }

    const int total = static_cast<int>(total_sec * sr);
    std::vector<double> samples(static_cast<size_t>(total), 0.0);

    // Per-sample phone index and blend weight (25 ms boundary ramps).
    const double ramp = 0.025 * sr;
    std::vector<double> boundaries(1, 0.0);
    for (double d : durations) boundaries.push_back(boundaries.back() + d * sr);

    double phase[24] = {0};
    for (int i = 0; i < total; ++i) {
      // Locate the active phone and its blend into the next one.
      int seg = 0;
      while (seg + 1 < count && i >= boundaries[static_cast<size_t>(seg) + 1]) ++seg;
      double into_next = 0.0;
      if (seg + 1 < count) {
        const double to_b = boundaries[static_cast<size_t>(seg) + 1] - i;
        if (to_b < ramp) into_next = 0.5 * (1.0 - to_b / ramp);
      }
      const Phone& cur = phones[static_cast<size_t>(seq[static_cast<size_t>(seg)])];
      const Phone& nxt = phones[static_cast<size_t>(
          seq[static_cast<size_t>(std::min(seg + 1, count - 1))])];

      auto blend = [&](double a, double b) { return a * (1 - into_next) + b * into_next; };
      const double declination = 1.0 - 0.03 * (i / static_cast<double>(sr));
      const double f0 = speaker.base_f0 *
                        blend(1.0 + cur.pitch_off, 1.0 + nxt.pitch_off) * declination;
      const double amp = blend(cur.amp, nxt.amp);

      double v = 0.0;
      const int harmonics = std::min(24, static_cast<int>(6800.0 / f0));
      for (int k = 1; k <= harmonics; ++k) {
        phase[k - 1] += 2.0 * std::numbers::pi * k * f0 / sr;
        const double freq = k * f0;
        const double gain = blend(formant_gain(freq, cur, speaker.formant_scale),
                                  formant_gain(freq, nxt, speaker.formant_scale));
        v += gain / k * std::sin(phase[k - 1]);
      }
      // Fade the utterance edges; keep a faint noise floor.
      double edge = 1.0;
      const double fade = 0.02 * sr;
      if (i < fade) edge = i / fade;
      if (total - i < fade) edge = (total - i) / fade;
      samples[static_cast<size_t>(i)] =
          amp * edge * v + 0.004 * (2.0 * rng.uniform() - 1.0);
    }

    double peak = 0;
    for (double v : samples) peak = std::max(peak, std::fabs(v));
    for (double& v : samples) v *= 0.7 / std::max(peak, 1e-9);

    char utt_id[32];
    std::snprintf(utt_id, sizeof(utt_id), "utt%04d", n);
    const std::string wav_path = dir + "/wav/" + utt_id + ".wav";
    signal::save_wav(wav_path, signal::Waveform{samples, sr});

    Utterance u;
    u.id = utt_id;
    u.wav_path = wav_path;
    for (int p : seq) u.tokens.push_back(phones[static_cast<size_t>(p)].symbol);
    u.lang = speaker.lang;
    u.spk = spk;
    out.manifest.utterances.push_back(std::move(u));
  }

  // Manifest, vocabulary, and a two-line probe set (one sentence per
  // language) for the diagnostics command.
  std::ofstream mf(dir + "/manifest.tsv");
  if (!mf) throw IoError("cannot write manifest in " + dir);
  for (const auto& u : out.manifest.utterances) {
    mf << u.id << '\t' << u.wav_path << '\t';
    for (size_t i = 0; i < u.tokens.size(); ++i) mf << (i ? " " : "") << u.tokens[i];
    mf << '\t' << u.lang << '\t' << u.spk << '\n';
  }
  mf.close();
  out.vocab.save(dir + "/vocab.txt");

  for (int lang = 0; lang < 2; ++lang) {
    const auto& phones = inventory(lang);
    std::string line = std::to_string(lang) + "\t";
    for (int i : {0, 2, 1, 4, 3, 5})
      line += std::string(phones[static_cast<size_t>(i)].symbol) + (i == 5 ? "" : " ");
    out.probe_lines.push_back(line);
  }
  std::ofstream pf(dir + "/probes.txt");
  for (const auto& l : out.probe_lines) pf << l << "\n";

  return out;
}

}  // namespace dtts::corpus
