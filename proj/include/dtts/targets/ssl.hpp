#pragma once

#include <string>

#include "dtts/rng.hpp"
#include "dtts/signal/mel.hpp"
#include "dtts/signal/records.hpp"

namespace dtts::targets {

// Stand-in for the frozen multilingual SSL encoder. Either ingests
// precomputed per-utterance feature files or synthesizes deterministic
// pseudo-features: a fixed seeded random projection of the input log-mel
// (50 Hz frame rate, matching the mel hop).
struct SslProviderConfig {
  enum class Mode { kStub, kFile };
  Mode mode = Mode::kStub;
  uint64_t stub_seed = 0;
  int d_ssl = 1024;
  std::string file_dir;  // file mode: <file_dir>/<utt_id>.ssl.bin
};

class SslFeatureProvider {
 public:
  explicit SslFeatureProvider(SslProviderConfig cfg) : cfg_(std::move(cfg)) {
    require(cfg_.d_ssl >= 1, "ssl provider: d_ssl must be >= 1");
  }

  const SslProviderConfig& config() const { return cfg_; }

  // w is expected to be the already-perturbed waveform.
  MatD features(const signal::Waveform& w, const std::string& utt_id) const {
    if (cfg_.mode == SslProviderConfig::Mode::kFile) {
      const std::string path = cfg_.file_dir + "/" + utt_id + ".ssl.bin";
      try {
        return signal::read_record_d(path);
      } catch (const IoError&) {
        throw IoError("missing SSL feature file for utterance '" + utt_id +
                      "': " + path);
      }
    }
    const MatD logmel = signal::mel_spectrogram(w).frames;
    return logmel * projection().transpose();
  }

 private:
  const MatD& projection() const {
    if (proj_.size() == 0) {
      RngStream rng = RngStream::derive(cfg_.stub_seed, {0x73736cULL});
      proj_.resize(cfg_.d_ssl, signal::kMelBins);
      const double scale = 1.0 / std::sqrt(static_cast<double>(signal::kMelBins));
      for (Eigen::Index i = 0; i < proj_.size(); ++i)
        proj_(i) = scale * rng.normal();
    }
    return proj_;
  }

  SslProviderConfig cfg_;
  mutable MatD proj_;
};

inline MatD ssl_features(const signal::Waveform& w, const SslFeatureProvider& provider,
                         const std::string& utt_id = "") {
  return provider.features(w, utt_id);
}

}  // namespace dtts::targets
