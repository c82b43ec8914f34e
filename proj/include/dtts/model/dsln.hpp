#pragma once

#include <utility>
#include <vector>

#include "dtts/nn/layers.hpp"
#include "dtts/nn/tape.hpp"
#include "dtts/rng.hpp"

namespace dtts::model {

// Permute speaker embeddings along the batch dimension. perm must be a
// permutation of {0..B-1}; the row multiset is preserved by construction.
template <typename Real>
Mat<Real> batch_shuffle(const Mat<Real>& e, const std::vector<int>& perm) {
  require(static_cast<Eigen::Index>(perm.size()) == e.rows(),
          "batch_shuffle: perm size != batch size");
  std::vector<bool> seen(perm.size(), false);
  for (int p : perm) {
    require(p >= 0 && p < static_cast<int>(perm.size()) && !seen[static_cast<size_t>(p)],
            "batch_shuffle: not a permutation");
    seen[static_cast<size_t>(p)] = true;
  }
  Mat<Real> out(e.rows(), e.cols());
  for (size_t i = 0; i < perm.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = e.row(perm[i]);
  return out;
}

// Mixing coefficient: Beta(2,2) during training, 1 at inference.
inline double sample_gamma(RngStream& rng, bool training) {
  return training ? rng.beta22() : 1.0;
}

// Convex mix of predicted speaker statistics. The endpoints return the
// inputs untouched so that gamma = 1 (inference) and gamma = 0 degenerate to
// the unmixed computation path bit-for-bit.
template <typename Real>
std::pair<nn::Var<Real>, nn::Var<Real>> mix_statistics(nn::Var<Real> w, nn::Var<Real> w_tilde,
                                                       nn::Var<Real> b, nn::Var<Real> b_tilde,
                                                       Real gamma) {
  require(gamma >= Real(0) && gamma <= Real(1), "mix_statistics: gamma outside [0,1]");
  if (gamma == Real(1)) return {w, b};
  if (gamma == Real(0)) return {w_tilde, b_tilde};
  nn::Var<Real> w_mix = nn::add(nn::scale(w, gamma), nn::scale(w_tilde, Real(1) - gamma));
  nn::Var<Real> b_mix = nn::add(nn::scale(b, gamma), nn::scale(b_tilde, Real(1) - gamma));
  return {w_mix, b_mix};
}

// Dynamic speaker layer normalization: layer-normalize, then modulate with a
// per-channel conv filter W(e_s) (kernel 3) and bias b(e_s), both predicted
// from the speaker embedding by a single linear layer. The filter predictor
// bias starts at the identity kernel so an untrained layer behaves like LN.
template <typename Real>
struct Dsln {
  nn::Linear<Real> w_pred;  // e_s -> C*k
  nn::Linear<Real> b_pred;  // e_s -> C
  Eigen::Index channels = 0;
  int kernel = 3;

  Dsln() = default;
  Dsln(nn::ParamStore<Real>& ps, const std::string& name, Eigen::Index emb_dim,
       Eigen::Index dim, int k = 3)
      : channels(dim), kernel(k) {
    w_pred = nn::Linear<Real>(ps, name + ".wp", emb_dim, dim * k);
    b_pred = nn::Linear<Real>(ps, name + ".bp", emb_dim, dim);
    // Small predictor weights plus identity-kernel bias.
    w_pred.w->value *= Real(0.1);
    b_pred.w->value *= Real(0.1);
    for (Eigen::Index c = 0; c < dim; ++c) w_pred.b->value(0, c * k + k / 2) = Real(1);
  }

  // Predicted (W, b) for one speaker embedding (1 x emb_dim).
  std::pair<nn::Var<Real>, nn::Var<Real>> stats(nn::Tape<Real>& t, nn::Var<Real> e_s) const {
    return {w_pred(t, e_s), b_pred(t, e_s)};
  }

  // W * LN(h) + b with precomputed statistics.
  nn::Var<Real> apply(nn::Tape<Real>& t, nn::Var<Real> h, nn::Var<Real> w_flat,
                      nn::Var<Real> b) const {
    nn::Var<Real> normed = nn::layer_norm_rows(h);
    nn::Var<Real> w = nn::reshape(w_flat, channels, kernel);
    return nn::add_rowvec(nn::depthwise_conv1d(normed, w), b);
  }

  nn::Var<Real> operator()(nn::Tape<Real>& t, nn::Var<Real> h, nn::Var<Real> e_s) const {
    auto [w, b] = stats(t, e_s);
    return apply(t, h, w, b);
  }

  // Mixed variant: statistics blended between the true and shuffled speakers.
  // Degenerates to the plain computation path when the partner is the same
  // node or gamma is 1, making those cases exactly equal to dsln().
  nn::Var<Real> mixed(nn::Tape<Real>& t, nn::Var<Real> h, nn::Var<Real> e_s,
                      nn::Var<Real> e_s_tilde, Real gamma) const {
    if (gamma == Real(1) || e_s_tilde.id == e_s.id) return (*this)(t, h, e_s);
    auto [w, b] = stats(t, e_s);
    auto [wt, bt] = stats(t, e_s_tilde);
    auto [w_mix, b_mix] = mix_statistics(w, wt, b, bt, gamma);
    return apply(t, h, w_mix, b_mix);
  }
};

}  // namespace dtts::model
