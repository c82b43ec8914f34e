#pragma once

#include <cmath>
#include <string>

#include "dtts/model/dsln.hpp"
#include "dtts/nn/layers.hpp"

namespace dtts::model {

// Per-forward context: evaluation runs with dropout 0, gamma 1 and the
// partner embedding equal to the speaker embedding, which makes MDSLN
// coincide with DSLN bit-for-bit.
template <typename Real>
struct ForwardCtx {
  bool training = false;
  Real dropout = Real(0);
  RngStream* rng = nullptr;
  nn::Var<Real> e_s;
  nn::Var<Real> e_s_partner;
  Real gamma = Real(1);

  nn::Var<Real> drop(nn::Var<Real> x) const {
    if (!training || dropout <= Real(0) || rng == nullptr) return x;
    return nn::dropout(x, dropout, *rng);
  }
};

// Fixed sinusoidal position encoding, added at stack inputs.
template <typename Real>
Mat<Real> sinusoidal_pe(Eigen::Index rows, Eigen::Index dim) {
  Mat<Real> pe(rows, dim);
  for (Eigen::Index p = 0; p < rows; ++p)
    for (Eigen::Index i = 0; i < dim; i += 2) {
      const double angle =
          static_cast<double>(p) /
          std::pow(10000.0, static_cast<double>(i) / static_cast<double>(dim));
      pe(p, i) = static_cast<Real>(std::sin(angle));
      if (i + 1 < dim) pe(p, i + 1) = static_cast<Real>(std::cos(angle));
    }
  return pe;
}

template <typename Real>
struct FeedForward {
  nn::LayerNorm<Real> pre;
  nn::Linear<Real> expand, project;

  FeedForward() = default;
  FeedForward(nn::ParamStore<Real>& ps, const std::string& name, Eigen::Index dim,
              int mult)
      : pre(ps, name + ".ln", dim),
        expand(ps, name + ".in", dim, dim * mult),
        project(ps, name + ".out", dim * mult, dim) {}

  nn::Var<Real> operator()(nn::Tape<Real>& t, nn::Var<Real> x,
                           const ForwardCtx<Real>& ctx) const {
    nn::Var<Real> h = nn::swish(expand(t, pre(t, x)));
    h = ctx.drop(h);
    return ctx.drop(project(t, h));
  }
};

// Single-head scaled dot-product self-attention.
template <typename Real>
struct SelfAttention {
  nn::LayerNorm<Real> pre;
  nn::Linear<Real> q, k, v, o;
  Eigen::Index dim = 0;

  SelfAttention() = default;
  SelfAttention(nn::ParamStore<Real>& ps, const std::string& name, Eigen::Index d)
      : pre(ps, name + ".ln", d),
        q(ps, name + ".q", d, d),
        k(ps, name + ".k", d, d),
        v(ps, name + ".v", d, d),
        o(ps, name + ".o", d, d),
        dim(d) {}

  nn::Var<Real> weights(nn::Tape<Real>& t, nn::Var<Real> x) const {
    nn::Var<Real> n = pre(t, x);
    nn::Var<Real> scores = nn::matmul(q(t, n), nn::transpose(k(t, n)));
    return nn::softmax_rows(
        nn::scale(scores, Real(1) / static_cast<Real>(std::sqrt(double(dim)))));
  }

  nn::Var<Real> operator()(nn::Tape<Real>& t, nn::Var<Real> x,
                           const ForwardCtx<Real>& ctx) const {
    nn::Var<Real> n = pre(t, x);
    nn::Var<Real> scores = nn::matmul(q(t, n), nn::transpose(k(t, n)));
    nn::Var<Real> att = nn::softmax_rows(
        nn::scale(scores, Real(1) / static_cast<Real>(std::sqrt(double(dim)))));
    return ctx.drop(o(t, nn::matmul(att, v(t, n))));
  }
};

// Pointwise expand + GLU, depthwise conv (kernel 7), LN, swish, pointwise.
template <typename Real>
struct ConvModule {
  nn::LayerNorm<Real> pre, mid;
  nn::Conv1d<Real> pointwise_in;   // dim -> 2*dim, k1
  nn::Param<Real>* depthwise = nullptr;  // dim x k
  nn::Conv1d<Real> pointwise_out;  // dim -> dim, k1
  int kernel = 7;

  ConvModule() = default;
  ConvModule(nn::ParamStore<Real>& ps, const std::string& name, Eigen::Index dim, int k)
      : pre(ps, name + ".ln", dim),
        mid(ps, name + ".mid_ln", dim),
        pointwise_in(ps, name + ".pw1", dim, 2 * dim, 1),
        pointwise_out(ps, name + ".pw2", dim, dim, 1),
        kernel(k) {
    depthwise = &ps.add(name + ".dw", dim, k, nn::Init::kUniformFanIn,
                        static_cast<double>(k));
  }

  nn::Var<Real> operator()(nn::Tape<Real>& t, nn::Var<Real> x,
                           const ForwardCtx<Real>& ctx) const {
    nn::Var<Real> h = nn::glu_cols(pointwise_in(t, pre(t, x)));
    h = nn::depthwise_conv1d(h, nn::use(t, *depthwise));
    h = nn::swish(mid(t, h));
    return ctx.drop(pointwise_out(t, h));
  }
};

enum class TailNorm { kLayerNorm, kDsln, kMdsln };

// Macaron conformer block: half-weighted feed-forward, single-head
// self-attention, depthwise-conv module, half-weighted feed-forward, then a
// final normalization (LN by default; DSLN in SD-encoder tails, MDSLN in
// LD-encoder tails).
template <typename Real>
struct ConformerBlock {
  FeedForward<Real> ff1, ff2;
  SelfAttention<Real> attn;
  ConvModule<Real> conv;
  TailNorm tail = TailNorm::kLayerNorm;
  nn::LayerNorm<Real> tail_ln;
  Dsln<Real> tail_dsln;

  ConformerBlock() = default;
  ConformerBlock(nn::ParamStore<Real>& ps, const std::string& name, Eigen::Index dim,
                 TailNorm tail_kind, Eigen::Index emb_dim, int conv_kernel = 7,
                 int ff_mult = 4, int dsln_kernel = 3)
      : ff1(ps, name + ".ff1", dim, ff_mult),
        ff2(ps, name + ".ff2", dim, ff_mult),
        attn(ps, name + ".attn", dim),
        conv(ps, name + ".conv", dim, conv_kernel),
        tail(tail_kind) {
    if (tail == TailNorm::kLayerNorm)
      tail_ln = nn::LayerNorm<Real>(ps, name + ".tail", dim);
    else
      tail_dsln = Dsln<Real>(ps, name + ".tail", emb_dim, dim, dsln_kernel);
  }

  nn::Var<Real> operator()(nn::Tape<Real>& t, nn::Var<Real> x,
                           const ForwardCtx<Real>& ctx) const {
    nn::Var<Real> h = nn::add(x, nn::scale(ff1(t, x, ctx), Real(0.5)));
    h = nn::add(h, attn(t, h, ctx));
    h = nn::add(h, conv(t, h, ctx));
    h = nn::add(h, nn::scale(ff2(t, h, ctx), Real(0.5)));
    switch (tail) {
      case TailNorm::kLayerNorm:
        return tail_ln(t, h);
      case TailNorm::kDsln:
        return tail_dsln(t, h, ctx.e_s);
      case TailNorm::kMdsln:
        return tail_dsln.mixed(t, h, ctx.e_s, ctx.e_s_partner, ctx.gamma);
    }
    return h;
  }
};

}  // namespace dtts::model
