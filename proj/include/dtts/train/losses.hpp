#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "dtts/align/aligner.hpp"
#include "dtts/nn/tape.hpp"

namespace dtts::train {

struct NonFiniteLossError : Error {
  explicit NonFiniteLossError(const std::string& term)
      : Error("non-finite loss term: " + term) {}
};

// Sentinel returned (with a warning, no gradient) when a CTC instance is
// infeasible; training continues.
constexpr double kCtcInfeasibleSentinel = 1e3;

namespace detail {

constexpr double kLogClamp = -16.11809565095832;  // log(1e-7)

// CTC forward-backward over the blank-extended label lattice, in log space.
// Returns -log P(target | logits) and, when grad is non-null, the gradient
// with respect to the raw logits (through the clamped log-softmax).
inline double ctc_forward_backward(const MatD& logits, const std::vector<int>& target,
                                   int blank, MatD* grad) {
  const Eigen::Index t_len = logits.rows();
  const Eigen::Index vocab = logits.cols();
  const int l_len = static_cast<int>(target.size());
  const int s_len = 2 * l_len + 1;

  // Clamped log-softmax.
  MatD lsm(t_len, vocab);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const double m = logits.row(t).maxCoeff();
    const double lse = m + std::log((logits.row(t).array() - m).exp().sum());
    lsm.row(t) = logits.row(t).array() - lse;
  }
  MatD lp = lsm.cwiseMax(kLogClamp);

  auto label = [&](int s) { return s % 2 == 0 ? blank : target[static_cast<size_t>(s / 2)]; };
  auto can_skip = [&](int s) {
    return s >= 2 && label(s) != blank && label(s) != label(s - 2);
  };

  const double kInf = align::kNegInf;
  MatD alpha = MatD::Constant(t_len, s_len, kInf);
  alpha(0, 0) = lp(0, blank);
  if (s_len > 1) alpha(0, 1) = lp(0, label(1));
  for (Eigen::Index t = 1; t < t_len; ++t)
    for (int s = 0; s < s_len; ++s) {
      double acc = alpha(t - 1, s);
      if (s >= 1) acc = align::logsumexp2(acc, alpha(t - 1, s - 1));
      if (can_skip(s)) acc = align::logsumexp2(acc, alpha(t - 1, s - 2));
      if (acc != kInf) alpha(t, s) = acc + lp(t, label(s));
    }

  double total = alpha(t_len - 1, s_len - 1);
  if (s_len > 1) total = align::logsumexp2(total, alpha(t_len - 1, s_len - 2));
  if (total == kInf) return kInf;

  if (grad) {
    MatD beta = MatD::Constant(t_len, s_len, kInf);
    beta(t_len - 1, s_len - 1) = 0.0;
    if (s_len > 1) beta(t_len - 1, s_len - 2) = 0.0;
    for (Eigen::Index t = t_len - 2; t >= 0; --t)
      for (int s = 0; s < s_len; ++s) {
        double acc = beta(t + 1, s) == kInf ? kInf : beta(t + 1, s) + lp(t + 1, label(s));
        if (s + 1 < s_len && beta(t + 1, s + 1) != kInf)
          acc = align::logsumexp2(acc, beta(t + 1, s + 1) + lp(t + 1, label(s + 1)));
        if (s + 2 < s_len && can_skip(s + 2) && beta(t + 1, s + 2) != kInf)
          acc = align::logsumexp2(acc, beta(t + 1, s + 2) + lp(t + 1, label(s + 2)));
        beta(t, s) = acc;
      }

    // d(-log P)/d lp[t,k], masked where the clamp is active.
    MatD glp = MatD::Zero(t_len, vocab);
    for (Eigen::Index t = 0; t < t_len; ++t)
      for (int s = 0; s < s_len; ++s) {
        if (alpha(t, s) == kInf || beta(t, s) == kInf) continue;
        glp(t, label(s)) -= std::exp(alpha(t, s) + beta(t, s) - total);
      }
    grad->resize(t_len, vocab);
    for (Eigen::Index t = 0; t < t_len; ++t) {
      double gsum = 0.0;
      for (Eigen::Index k = 0; k < vocab; ++k) {
        if (lsm(t, k) <= kLogClamp) glp(t, k) = 0.0;
        gsum += glp(t, k);
      }
      grad->row(t) = glp.row(t) - lsm.row(t).array().exp().matrix() * gsum;
    }
  }
  return -total;
}

inline bool ctc_feasible(Eigen::Index t_len, const std::vector<int>& target) {
  int needed = static_cast<int>(target.size());
  for (size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++needed;
  return t_len >= needed && !target.empty();
}

}  // namespace detail

// Standard CTC loss with blank = last column. Infeasible instances yield a
// finite sentinel with a warning instead of stopping training.
template <typename Real>
nn::Var<Real> ctc_loss(nn::Var<Real> logits, const std::vector<int>& target) {
  nn::Tape<Real>* t = logits.tape;
  const int blank = static_cast<int>(logits.cols()) - 1;
  for (int id : target)
    require(id >= 0 && id < blank, "ctc_loss: target id outside vocabulary");

  if (!detail::ctc_feasible(logits.rows(), target)) {
    std::fprintf(stderr,
                 "warning: infeasible CTC instance (T'=%ld, L=%zu), using sentinel loss\n",
                 static_cast<long>(logits.rows()), target.size());
    Mat<Real> v(1, 1);
    v(0, 0) = static_cast<Real>(kCtcInfeasibleSentinel);
    return t->alloc(std::move(v), false);
  }

  const MatD logits_d = logits.value().template cast<double>();
  const bool needs = t->needs_grad(logits.id);
  MatD grad;
  const double loss = detail::ctc_forward_backward(logits_d, target, blank,
                                                   needs ? &grad : nullptr);

  Mat<Real> v(1, 1);
  v(0, 0) = static_cast<Real>(loss);
  nn::Var<Real> out = t->alloc(std::move(v), needs);
  if (needs) {
    nn::Var<Real> gv = t->alloc(grad.cast<Real>(), false);
    t->on_backward(out, [t, logits, gv, out] {
      t->grad_ref(logits.id) += t->grad_ref(out.id)(0, 0) * gv.value();
    });
  }
  return out;
}

// One scalar per objective term; total follows the fixed weighting
// total = mel + align + 0.1 * (dur + ldp + lde + lin + ctc + sdp + sde).
template <typename Real>
struct LossBreakdown {
  Real mel = 0, align = 0, dur = 0, ldp = 0, lde = 0, lin = 0, ctc = 0, sdp = 0, sde = 0;
  Real total = 0;
};

constexpr double kAuxLossWeight = 0.1;

template <typename Real>
struct LossTerms {
  nn::Var<Real> mel, align, dur, ldp, lde, lin, ctc, sdp, sde;
};

template <typename Real>
nn::Var<Real> total_loss(const LossTerms<Real>& terms, LossBreakdown<Real>* breakdown) {
  auto check = [](nn::Var<Real> v, const char* name) -> Real {
    const Real x = v.scalar();
    if (!std::isfinite(static_cast<double>(x))) throw NonFiniteLossError(name);
    return x;
  };
  LossBreakdown<Real> b;
  b.mel = check(terms.mel, "mel");
  b.align = check(terms.align, "align");
  b.dur = check(terms.dur, "dur");
  b.ldp = check(terms.ldp, "ldp");
  b.lde = check(terms.lde, "lde");
  b.lin = check(terms.lin, "lin");
  b.ctc = check(terms.ctc, "ctc");
  b.sdp = check(terms.sdp, "sdp");
  b.sde = check(terms.sde, "sde");

  const Real w = static_cast<Real>(kAuxLossWeight);
  nn::Var<Real> aux = nn::add(
      terms.dur,
      nn::add(terms.ldp,
              nn::add(terms.lde, nn::add(terms.lin, nn::add(terms.ctc,
                                                            nn::add(terms.sdp, terms.sde))))));
  nn::Var<Real> total = nn::add(nn::add(terms.mel, terms.align), nn::scale(aux, w));
  b.total = total.scalar();
  if (!std::isfinite(static_cast<double>(b.total))) throw NonFiniteLossError("total");
  if (breakdown) *breakdown = b;
  return total;
}

}  // namespace dtts::train
