#pragma once

#include <string>
#include <vector>

#include "dtts/model/conformer.hpp"

namespace dtts::model {

// Two conv layers with ReLU, each followed by layer norm and dropout, then a
// linear head. Output width 1 for scalar tracks, 192 for linguistic features.
template <typename Real>
struct VariancePredictor {
  nn::Conv1d<Real> c1, c2;
  nn::LayerNorm<Real> ln1, ln2;
  nn::Linear<Real> head;

  VariancePredictor() = default;
  VariancePredictor(nn::ParamStore<Real>& ps, const std::string& name, Eigen::Index dim,
                    Eigen::Index out, int k = 3)
      : c1(ps, name + ".c1", dim, dim, k),
        c2(ps, name + ".c2", dim, dim, k),
        ln1(ps, name + ".ln1", dim),
        ln2(ps, name + ".ln2", dim),
        head(ps, name + ".head", dim, out) {}

  nn::Var<Real> operator()(nn::Tape<Real>& t, nn::Var<Real> x,
                           const ForwardCtx<Real>& ctx) const {
    nn::Var<Real> h = ctx.drop(ln1(t, nn::relu(c1(t, x))));
    h = ctx.drop(ln2(t, nn::relu(c2(t, h))));
    return head(t, h);
  }
};

template <typename Real>
Mat<Real> bits_to_column(const std::vector<int>& bits) {
  Mat<Real> m(static_cast<Eigen::Index>(bits.size()), 1);
  for (size_t i = 0; i < bits.size(); ++i)
    m(static_cast<Eigen::Index>(i), 0) = static_cast<Real>(bits[i]);
  return m;
}

inline std::vector<int> threshold_logits(const MatD& logits) {
  std::vector<int> bits(static_cast<size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i)
    bits[static_cast<size_t>(i)] = logits(i, 0) >= 0.0 ? 1 : 0;  // sigmoid >= 0.5
  return bits;
}

// Duration, LD pitch and LD energy predictors over the speaker-generalized
// text encoding. Binary pitch/energy values (targets when training,
// thresholded predictions when inferring) are embedded by one conv layer
// each and added to the hidden sequence.
template <typename Real>
struct LdvAdaptor {
  VariancePredictor<Real> duration, pitch, energy;
  nn::Conv1d<Real> embed_pitch, embed_energy;

  LdvAdaptor() = default;
  LdvAdaptor(nn::ParamStore<Real>& ps, const std::string& name, Eigen::Index dim)
      : duration(ps, name + ".dur", dim, 1),
        pitch(ps, name + ".ldp", dim, 1),
        energy(ps, name + ".lde", dim, 1),
        embed_pitch(ps, name + ".emb_p", 1, dim, 3),
        embed_energy(ps, name + ".emb_e", 1, dim, 3) {}

  struct Out {
    nn::Var<Real> hidden;      // h + embedded binary variations
    nn::Var<Real> dur_logits;  // log(d+1) domain
    nn::Var<Real> pitch_logits;
    nn::Var<Real> energy_logits;
    std::vector<int> pitch_bits;  // the bits that were embedded
    std::vector<int> energy_bits;
  };

  Out operator()(nn::Tape<Real>& t, nn::Var<Real> h, const ForwardCtx<Real>& ctx,
                 const std::vector<int>* pitch_targets,
                 const std::vector<int>* energy_targets) const {
    Out out;
    out.dur_logits = duration(t, h, ctx);
    out.pitch_logits = pitch(t, h, ctx);
    out.energy_logits = energy(t, h, ctx);
    out.pitch_bits = pitch_targets
                         ? *pitch_targets
                         : threshold_logits(out.pitch_logits.value().template cast<double>());
    out.energy_bits = energy_targets
                          ? *energy_targets
                          : threshold_logits(out.energy_logits.value().template cast<double>());
    nn::Var<Real> p_emb = embed_pitch(t, t.leaf(bits_to_column<Real>(out.pitch_bits)));
    nn::Var<Real> e_emb = embed_energy(t, t.leaf(bits_to_column<Real>(out.energy_bits)));
    out.hidden = nn::add(h, nn::add(p_emb, e_emb));
    return out;
  }
};

// Frame-level speaker-dependent pitch/energy predictors with the same
// teacher-forcing embedding scheme.
template <typename Real>
struct SdvAdaptor {
  VariancePredictor<Real> pitch, energy;
  nn::Conv1d<Real> embed_pitch, embed_energy;

  SdvAdaptor() = default;
  SdvAdaptor(nn::ParamStore<Real>& ps, const std::string& name, Eigen::Index dim)
      : pitch(ps, name + ".sdp", dim, 1),
        energy(ps, name + ".sde", dim, 1),
        embed_pitch(ps, name + ".emb_p", 1, dim, 3),
        embed_energy(ps, name + ".emb_e", 1, dim, 3) {}

  struct Out {
    nn::Var<Real> hidden;
    nn::Var<Real> pitch_pred;   // T x 1
    nn::Var<Real> energy_pred;  // T x 1
  };

  Out operator()(nn::Tape<Real>& t, nn::Var<Real> h, const ForwardCtx<Real>& ctx,
                 const Mat<Real>* pitch_target, const Mat<Real>* energy_target) const {
    Out out;
    out.pitch_pred = pitch(t, h, ctx);
    out.energy_pred = energy(t, h, ctx);
    nn::Var<Real> p_in = pitch_target ? t.leaf(*pitch_target) : out.pitch_pred;
    nn::Var<Real> e_in = energy_target ? t.leaf(*energy_target) : out.energy_pred;
    nn::Var<Real> p_emb = embed_pitch(t, p_in);
    nn::Var<Real> e_emb = embed_energy(t, e_in);
    out.hidden = nn::add(h, nn::add(p_emb, e_emb));
    return out;
  }
};

// Linguistic predictor over the LD decoder output plus the conv-projected
// linguistic stream (target features when training, predictions otherwise).
template <typename Real>
struct LinguisticAdaptor {
  VariancePredictor<Real> predictor;  // 192-wide output
  nn::Conv1d<Real> embed;

  LinguisticAdaptor() = default;
  LinguisticAdaptor(nn::ParamStore<Real>& ps, const std::string& name, Eigen::Index dim)
      : predictor(ps, name + ".pred", dim, dim), embed(ps, name + ".emb", dim, dim, 3) {}

  struct Out {
    nn::Var<Real> hidden;
    nn::Var<Real> pred;  // T x 192
  };

  Out operator()(nn::Tape<Real>& t, nn::Var<Real> h_dec, const ForwardCtx<Real>& ctx,
                 nn::Var<Real> target /* invalid Var when inferring */) const {
    Out out;
    out.pred = predictor(t, h_dec, ctx);
    nn::Var<Real> stream = target.valid() ? target : out.pred;
    out.hidden = nn::add(h_dec, embed(t, stream));
    return out;
  }
};

}  // namespace dtts::model
