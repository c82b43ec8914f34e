#pragma once

#include <string>

#include "dtts/nn/params.hpp"
#include "dtts/nn/tape.hpp"

namespace dtts::nn {

template <typename Real>
struct Linear {
  Param<Real>* w = nullptr;  // out x in
  Param<Real>* b = nullptr;  // 1 x out

  Linear() = default;
  Linear(ParamStore<Real>& ps, const std::string& name, Eigen::Index in, Eigen::Index out) {
    w = &ps.add(name + ".w", out, in, Init::kUniformFanIn, static_cast<double>(in));
    b = &ps.add(name + ".b", 1, out, Init::kZero);
  }

  Var<Real> operator()(Tape<Real>& t, Var<Real> x) const {
    return add_rowvec(matmul(x, transpose(use(t, *w))), use(t, *b));
  }
};

template <typename Real>
struct Conv1d {
  Param<Real>* w = nullptr;  // out x (in*k)
  Param<Real>* b = nullptr;
  int k = 1;

  Conv1d() = default;
  Conv1d(ParamStore<Real>& ps, const std::string& name, Eigen::Index in, Eigen::Index out,
         int kernel)
      : k(kernel) {
    w = &ps.add(name + ".w", out, in * kernel, Init::kUniformFanIn,
                static_cast<double>(in * kernel));
    b = &ps.add(name + ".b", 1, out, Init::kZero);
  }

  Var<Real> operator()(Tape<Real>& t, Var<Real> x) const {
    return add_rowvec(conv1d(x, use(t, *w), k), use(t, *b));
  }
};

// Layer norm with learned per-channel gain and bias.
template <typename Real>
struct LayerNorm {
  Param<Real>* gain = nullptr;
  Param<Real>* bias = nullptr;

  LayerNorm() = default;
  LayerNorm(ParamStore<Real>& ps, const std::string& name, Eigen::Index dim) {
    gain = &ps.add(name + ".g", 1, dim, Init::kZero);
    bias = &ps.add(name + ".b", 1, dim, Init::kZero);
    gain->value.setOnes();
  }

  Var<Real> operator()(Tape<Real>& t, Var<Real> x) const {
    Var<Real> n = layer_norm_rows(x);
    Var<Real> g = use(t, *gain);
    Mat<Real> ones = Mat<Real>::Ones(x.rows(), 1);
    Var<Real> gm = matmul(t.leaf(std::move(ones)), g);
    return add_rowvec(mul(n, gm), use(t, *bias));
  }
};

}  // namespace dtts::nn
