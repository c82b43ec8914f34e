#pragma once

#include <cmath>

#include "dtts/nn/params.hpp"

namespace dtts::train {

struct OptimizerConfig {
  double beta1 = 0.8;
  double beta2 = 0.99;
  double eps = 1e-9;
  double lr0 = 2e-4;
  double decay_per_epoch = 0.999875;
  int accumulation = 2;  // optimizer steps after every N batches
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay. Gradients are expected to be accumulated
// in Param::grad; grad_scale (1/accumulation) is applied at step time.
template <typename Real>
class AdamW {
 public:
  explicit AdamW(OptimizerConfig cfg) : cfg_(cfg) {}

  const OptimizerConfig& config() const { return cfg_; }

  double lr_for_epoch(long epoch) const {
    return cfg_.lr0 * std::pow(cfg_.decay_per_epoch, static_cast<double>(epoch));
  }

  long step_count() const { return step_count_; }
  void set_step_count(long n) { step_count_ = n; }

  void step(nn::ParamStore<Real>& ps, double lr, Real grad_scale) {
    ++step_count_;
    const Real b1 = static_cast<Real>(cfg_.beta1);
    const Real b2 = static_cast<Real>(cfg_.beta2);
    const Real eps = static_cast<Real>(cfg_.eps);
    const Real wd = static_cast<Real>(cfg_.weight_decay);
    const Real lr_r = static_cast<Real>(lr);
    const Real bc1 =
        static_cast<Real>(1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_)));
    const Real bc2 =
        static_cast<Real>(1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_)));

    for (auto& up : ps.all()) {
      nn::Param<Real>& p = *up;
      for (Eigen::Index i = 0; i < p.value.size(); ++i) {
        const Real g = p.grad.data()[i] * grad_scale;
        Real& m = p.m.data()[i];
        Real& v = p.v.data()[i];
        m = b1 * m + (Real(1) - b1) * g;
        v = b2 * v + (Real(1) - b2) * g * g;
        const Real m_hat = m / bc1;
        const Real v_hat = v / bc2;
        p.value.data()[i] -=
            lr_r * (m_hat / (std::sqrt(v_hat) + eps) + wd * p.value.data()[i]);
      }
    }
    ps.zero_grad();
  }

 private:
  OptimizerConfig cfg_;
  long step_count_ = 0;
};

}  // namespace dtts::train
