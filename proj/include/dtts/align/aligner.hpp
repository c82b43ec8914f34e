#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "dtts/nn/layers.hpp"
#include "dtts/nn/tape.hpp"

namespace dtts::align {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double logsumexp2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Learned-projection distance attention: A[t, i] is the row-softmax over
// tokens of -||proj_q(mel_t) - proj_k(text_i)||^2. An optional static
// diagonal prior (log-domain Gaussian of normalized width 0.2) speeds up
// early convergence and is disabled after warmup.
template <typename Real>
struct Aligner {
  nn::Linear<Real> proj_q;  // mel 80 -> 192
  nn::Linear<Real> proj_k;  // text hidden 192 -> 192

  Aligner() = default;
  Aligner(nn::ParamStore<Real>& ps, Eigen::Index mel_bins, Eigen::Index dim)
      : proj_q(ps, "aligner.q", mel_bins, dim), proj_k(ps, "aligner.k", dim, dim) {}

  // Returns log A, T x L.
  nn::Var<Real> log_alignment(nn::Tape<Real>& t, nn::Var<Real> text_keys,
                              const Mat<Real>& mel, bool with_prior = false,
                              double prior_width = 0.2) const {
    require(mel.rows() >= 1 && text_keys.rows() >= 1, "alignment: empty inputs");
    nn::Var<Real> q = proj_q(t, t.leaf(mel));
    nn::Var<Real> k = proj_k(t, text_keys);
    nn::Var<Real> scores = nn::scale(nn::pairwise_sqdist(q, k), Real(-1));
    if (with_prior) {
      const Eigen::Index rows = mel.rows(), cols = text_keys.rows();
      Mat<Real> prior(rows, cols);
      for (Eigen::Index ti = 0; ti < rows; ++ti)
        for (Eigen::Index li = 0; li < cols; ++li) {
          const double dt = (ti + 0.5) / static_cast<double>(rows) -
                            (li + 0.5) / static_cast<double>(cols);
          prior(ti, li) = static_cast<Real>(-dt * dt / (2.0 * prior_width * prior_width));
        }
      scores = nn::add(scores, t.leaf(std::move(prior)));
    }
    return nn::log_softmax_rows(scores);
  }

  nn::Var<Real> soft_alignment(nn::Tape<Real>& t, nn::Var<Real> text_keys,
                               const Mat<Real>& mel, bool with_prior = false) const {
    return nn::exp_of(log_alignment(t, text_keys, mel, with_prior));
  }
};

namespace detail {

// Forward lattice over monotonic complete paths (start at token 0, end at
// token L-1, step 0 or +1 per frame). Returns log-total-probability and the
// per-cell posterior occupancy, both computed in double.
inline double forward_backward(const MatD& log_a, MatD* occupancy) {
  const Eigen::Index t_len = log_a.rows(), l_len = log_a.cols();
  MatD alpha = MatD::Constant(t_len, l_len, kNegInf);
  alpha(0, 0) = log_a(0, 0);
  for (Eigen::Index t = 1; t < t_len; ++t)
    for (Eigen::Index i = 0; i < l_len; ++i) {
      double best = alpha(t - 1, i);
      if (i > 0) best = logsumexp2(best, alpha(t - 1, i - 1));
      alpha(t, i) = best == kNegInf ? kNegInf : best + log_a(t, i);
    }
  const double total = alpha(t_len - 1, l_len - 1);
  if (occupancy) {
    MatD beta = MatD::Constant(t_len, l_len, kNegInf);
    beta(t_len - 1, l_len - 1) = 0.0;
    for (Eigen::Index t = t_len - 2; t >= 0; --t)
      for (Eigen::Index i = 0; i < l_len; ++i) {
        double stay = beta(t + 1, i) == kNegInf ? kNegInf
                                                : beta(t + 1, i) + log_a(t + 1, i);
        double move = (i + 1 < l_len && beta(t + 1, i + 1) != kNegInf)
                          ? beta(t + 1, i + 1) + log_a(t + 1, i + 1)
                          : kNegInf;
        beta(t, i) = logsumexp2(stay, move);
      }
    occupancy->resize(t_len, l_len);
    for (Eigen::Index t = 0; t < t_len; ++t)
      for (Eigen::Index i = 0; i < l_len; ++i) {
        const double la = alpha(t, i), lb = beta(t, i);
        (*occupancy)(t, i) =
            (la == kNegInf || lb == kNegInf) ? 0.0 : std::exp(la + lb - total);
      }
  }
  return total;
}

}  // namespace detail

// -log of the total probability of all monotonic complete paths through A,
// normalized by T. Input is log A.
template <typename Real>
nn::Var<Real> forward_sum_loss(nn::Var<Real> log_a_var) {
  nn::Tape<Real>* t = log_a_var.tape;
  const Eigen::Index t_len = log_a_var.rows(), l_len = log_a_var.cols();
  if (t_len < l_len)
    throw InputError("forward_sum_loss: infeasible alignment (T < L)");

  MatD log_a = log_a_var.value().template cast<double>();
  MatD occupancy;
  const bool needs = t->needs_grad(log_a_var.id);
  const double total = detail::forward_backward(log_a, needs ? &occupancy : nullptr);

  Mat<Real> v(1, 1);
  v(0, 0) = static_cast<Real>(-total / static_cast<double>(t_len));
  nn::Var<Real> out = t->alloc(std::move(v), needs);
  if (needs) {
    Mat<Real> gbuf =
        (occupancy * (-1.0 / static_cast<double>(t_len))).cast<Real>();
    nn::Var<Real> gv = t->alloc(std::move(gbuf), false);
    t->on_backward(out, [t, log_a_var, gv, out] {
      t->grad_ref(log_a_var.id) += t->grad_ref(out.id)(0, 0) * gv.value();
    });
  }
  return out;
}

// Most probable monotonic complete path, as frames-per-token. Every token
// receives at least one frame by construction.
inline std::vector<int> viterbi_durations(const MatD& log_a) {
  const Eigen::Index t_len = log_a.rows(), l_len = log_a.cols();
  if (t_len < l_len)
    throw InputError("viterbi_durations: infeasible alignment (T < L)");

  MatD score = MatD::Constant(t_len, l_len, kNegInf);
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> from(t_len, l_len);
  from.setZero();
  score(0, 0) = log_a(0, 0);
  for (Eigen::Index t = 1; t < t_len; ++t)
    for (Eigen::Index i = 0; i < l_len; ++i) {
      double stay = score(t - 1, i);
      double move = i > 0 ? score(t - 1, i - 1) : kNegInf;
      if (stay == kNegInf && move == kNegInf) continue;
      if (move > stay) {
        score(t, i) = move + log_a(t, i);
        from(t, i) = 1;
      } else {
        score(t, i) = stay + log_a(t, i);
        from(t, i) = 0;
      }
    }

  std::vector<int> durations(static_cast<size_t>(l_len), 0);
  Eigen::Index i = l_len - 1;
  for (Eigen::Index t = t_len - 1; t >= 0; --t) {
    durations[static_cast<size_t>(i)] += 1;
    if (t > 0 && from(t, i) == 1) --i;
  }
  return durations;
}

// KL(hard || soft) = -(1/T) sum_t log A[t, token(t)] for the hard path.
template <typename Real>
nn::Var<Real> binarization_loss(nn::Var<Real> log_a_var, const std::vector<int>& durations) {
  nn::Tape<Real>* t = log_a_var.tape;
  const Eigen::Index t_len = log_a_var.rows();
  require(static_cast<Eigen::Index>(durations.size()) == log_a_var.cols(),
          "binarization_loss: duration count != token count");

  std::vector<int> token_of_frame;
  token_of_frame.reserve(static_cast<size_t>(t_len));
  for (size_t i = 0; i < durations.size(); ++i)
    for (int k = 0; k < durations[i]; ++k) token_of_frame.push_back(static_cast<int>(i));
  require(static_cast<Eigen::Index>(token_of_frame.size()) == t_len,
          "binarization_loss: durations must sum to T");

  double acc = 0.0;
  for (Eigen::Index ti = 0; ti < t_len; ++ti)
    acc += static_cast<double>(log_a_var.value()(ti, token_of_frame[static_cast<size_t>(ti)]));
  Mat<Real> v(1, 1);
  v(0, 0) = static_cast<Real>(-acc / static_cast<double>(t_len));
  nn::Var<Real> out = t->alloc(std::move(v), t->needs_grad(log_a_var.id));
  if (t->needs_grad(out.id))
    t->on_backward(out, [t, log_a_var, out, token_of_frame, t_len] {
      const Real g = t->grad_ref(out.id)(0, 0);
      Mat<Real>& ga = t->grad_ref(log_a_var.id);
      const Real w = -g / static_cast<Real>(t_len);
      for (Eigen::Index ti = 0; ti < t_len; ++ti)
        ga(ti, token_of_frame[static_cast<size_t>(ti)]) += w;
    });
  return out;
}

}  // namespace dtts::align
