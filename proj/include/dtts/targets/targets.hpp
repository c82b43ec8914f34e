#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <vector>

#include "dtts/common.hpp"

namespace dtts::targets {

using DurationSeq = std::vector<int>;

inline int duration_sum(const DurationSeq& d) {
  int s = 0;
  for (int v : d) {
    require(v >= 0, "durations must be non-negative");
    s += v;
  }
  return s;
}

// Mean of each token's frames. Tokens assigned zero frames inherit the
// previous token's value (0 for a leading zero-duration token).
inline MatD average_per_token(const MatD& frames, const DurationSeq& d) {
  require(frames.cols() == 1, "average_per_token: expected a column vector");
  require(duration_sum(d) == frames.rows(),
          "average_per_token: durations must sum to frame count");
  MatD out(static_cast<Eigen::Index>(d.size()), 1);
  Eigen::Index pos = 0;
  double prev = 0.0;
  for (size_t i = 0; i < d.size(); ++i) {
    if (d[i] == 0) {
      out(static_cast<Eigen::Index>(i), 0) = prev;
      continue;
    }
    double mean = frames.middleRows(pos, d[i]).mean();
    out(static_cast<Eigen::Index>(i), 0) = mean;
    prev = mean;
    pos += d[i];
  }
  return out;
}

// Rise detector: out[i] = 1 iff avg[i-1] < avg[i] (strict); out[0] = 0.
inline std::vector<int> binarize(const MatD& avg) {
  require(avg.rows() >= 1 && avg.cols() == 1, "binarize: expected a column vector");
  std::vector<int> out(static_cast<size_t>(avg.rows()), 0);
  for (Eigen::Index i = 1; i < avg.rows(); ++i)
    out[static_cast<size_t>(i)] = avg(i - 1, 0) < avg(i, 0) ? 1 : 0;
  return out;
}

struct LdTargets {
  std::vector<int> pitch;
  std::vector<int> energy;
};

inline LdTargets build_ld_targets(const MatD& pitch, const MatD& energy,
                                  const DurationSeq& d) {
  require(pitch.rows() == energy.rows(), "build_ld_targets: length mismatch");
  LdTargets t;
  t.pitch = binarize(average_per_token(pitch, d));
  t.energy = binarize(average_per_token(energy, d));
  return t;
}

// Per-speaker voiced-pitch statistics, computed corpus-wide during prepare.
struct SpeakerStats {
  std::map<int, std::pair<double, double>> mean_std;  // speaker -> (mu, sigma)

  void set(int speaker, double mean, double stddev) {
    mean_std[speaker] = {mean, stddev};
  }

  std::pair<double, double> get(int speaker) const {
    auto it = mean_std.find(speaker);
    if (it == mean_std.end())
      throw LookupError("no pitch stats for speaker " + std::to_string(speaker));
    return it->second;
  }
};

struct SdTargets {
  MatD pitch;   // T x 1, standardized on voiced frames, 0 on unvoiced
  MatD energy;  // T x 1, passed through unchanged
};

inline SdTargets build_sd_targets(const MatD& pitch, const MatD& energy, int speaker,
                                  const SpeakerStats& stats) {
  require(pitch.rows() == energy.rows(), "build_sd_targets: length mismatch");
  auto [mu, sigma] = stats.get(speaker);
  if (sigma <= 0.0) {
    std::fprintf(stderr, "warning: speaker %d has zero pitch variance, using sigma=1\n",
                 speaker);
    sigma = 1.0;
  }
  SdTargets t;
  t.pitch = MatD::Zero(pitch.rows(), 1);
  for (Eigen::Index i = 0; i < pitch.rows(); ++i)
    if (pitch(i, 0) > 0) t.pitch(i, 0) = (pitch(i, 0) - mu) / sigma;
  t.energy = energy;
  return t;
}

// Accumulates voiced pitch over a corpus, one speaker at a time.
class SpeakerStatsBuilder {
 public:
  void add(int speaker, const MatD& pitch) {
    auto& acc = acc_[speaker];
    for (Eigen::Index i = 0; i < pitch.rows(); ++i)
      if (pitch(i, 0) > 0) {
        acc.sum += pitch(i, 0);
        acc.sum_sq += pitch(i, 0) * pitch(i, 0);
        acc.count += 1;
      }
  }

  SpeakerStats finish() const {
    SpeakerStats s;
    for (const auto& [speaker, acc] : acc_) {
      if (acc.count == 0) {
        s.set(speaker, 0.0, 1.0);
        continue;
      }
      const double mean = acc.sum / acc.count;
      const double var = std::max(0.0, acc.sum_sq / acc.count - mean * mean);
      s.set(speaker, mean, std::sqrt(var));
    }
    return s;
  }

 private:
  struct Acc {
    double sum = 0, sum_sq = 0;
    long count = 0;
  };
  std::map<int, Acc> acc_;
};

}  // namespace dtts::targets
