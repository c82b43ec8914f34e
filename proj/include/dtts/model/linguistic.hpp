#pragma once

#include <string>
#include <vector>

#include "dtts/model/conformer.hpp"

namespace dtts::model {

// Maps frozen-SSL features to 192-d linguistic features: input projection,
// two residual ConvGLU blocks, and a final layer normalization.
template <typename Real>
struct LinguisticEncoder {
  nn::Linear<Real> in_proj;
  nn::Conv1d<Real> glu1, glu2;  // dim -> 2*dim, halved back by the gate
  nn::LayerNorm<Real> final_ln;

  LinguisticEncoder() = default;
  LinguisticEncoder(nn::ParamStore<Real>& ps, const std::string& name, Eigen::Index d_ssl,
                    Eigen::Index dim)
      : in_proj(ps, name + ".in", d_ssl, dim),
        glu1(ps, name + ".glu1", dim, 2 * dim, 3),
        glu2(ps, name + ".glu2", dim, 2 * dim, 3),
        final_ln(ps, name + ".ln", dim) {}

  nn::Var<Real> operator()(nn::Tape<Real>& t, nn::Var<Real> ssl) const {
    nn::Var<Real> h = in_proj(t, ssl);
    h = nn::add(h, nn::glu_cols(glu1(t, h)));
    h = nn::add(h, nn::glu_cols(glu2(t, h)));
    return final_ln(t, h);
  }
};

// Auxiliary text predictor: two conformer blocks and a projection to the
// IPA vocabulary plus the CTC blank.
template <typename Real>
struct TextPredictor {
  std::vector<ConformerBlock<Real>> blocks;
  nn::Linear<Real> proj;

  TextPredictor() = default;
  TextPredictor(nn::ParamStore<Real>& ps, const std::string& name, Eigen::Index dim,
                Eigen::Index vocab, int n_blocks = 2) {
    for (int i = 0; i < n_blocks; ++i)
      blocks.emplace_back(ps, name + ".block" + std::to_string(i), dim,
                          TailNorm::kLayerNorm, dim);
    proj = nn::Linear<Real>(ps, name + ".proj", dim, vocab + 1);
  }

  nn::Var<Real> operator()(nn::Tape<Real>& t, nn::Var<Real> z,
                           const ForwardCtx<Real>& ctx) const {
    nn::Var<Real> h = z;
    for (const auto& b : blocks) h = b(t, h, ctx);
    return proj(t, h);
  }
};

}  // namespace dtts::model
