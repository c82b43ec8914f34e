#include <gtest/gtest.h>

#include <algorithm>

#include "dtts/model/net.hpp"
#include "dtts/train/losses.hpp"
#include "gradcheck.hpp"

using namespace dtts;
using nn::Tape;
using nn::Var;
using test::random_mat;

namespace {

model::ModelConfig tiny_config() {
  model::ModelConfig cfg;
  cfg.hidden = 16;
  cfg.ld_encoder_blocks = 1;
  cfg.ld_decoder_blocks = 1;
  cfg.sd_encoder_blocks = 1;
  cfg.sd_decoder_blocks = 1;
  cfg.text_predictor_blocks = 1;
  cfg.ff_mult = 2;
  cfg.mel_bins = 8;
  cfg.d_ssl = 12;
  cfg.vocab_size = 5;
  cfg.num_languages = 2;
  cfg.num_speakers = 3;
  cfg.dropout = 0.0;
  return cfg;
}

// LN + depthwise conv + bias, recomputed with bare loops.
MatD dsln_oracle(const MatD& h, const MatD& w_ck, const MatD& bias) {
  const Eigen::Index rows = h.rows(), c = h.cols();
  const int k = static_cast<int>(w_ck.cols());
  const int pad = (k - 1) / 2;
  MatD normed(rows, c);
  for (Eigen::Index i = 0; i < rows; ++i) {
    double mu = h.row(i).mean();
    double var = (h.row(i).array() - mu).square().mean();
    normed.row(i) = ((h.row(i).array() - mu) / std::sqrt(var + 1e-5)).matrix();
  }
  MatD out = MatD::Zero(rows, c);
  for (Eigen::Index tpos = 0; tpos < rows; ++tpos)
    for (Eigen::Index ch = 0; ch < c; ++ch) {
      double acc = 0;
      for (int j = 0; j < k; ++j) {
        Eigen::Index src = tpos + j - pad;
        if (src < 0 || src >= rows) continue;
        acc += normed(src, ch) * w_ck(ch, j);
      }
      out(tpos, ch) = acc + bias(0, ch);
    }
  return out;
}

}  // namespace

TEST(Dsln, ZeroedPredictorGivesZeros) {
  nn::ParamStore<double> ps(1);
  model::Dsln<double> dsln(ps, "d", 6, 4);
  dsln.w_pred.w->value.setZero();
  dsln.w_pred.b->value.setZero();
  dsln.b_pred.w->value.setZero();
  dsln.b_pred.b->value.setZero();
  Tape<double> t;
  auto out = dsln(t, t.leaf(random_mat(5, 4, 2)), t.leaf(random_mat(1, 6, 3)));
  EXPECT_NEAR(out.value().cwiseAbs().maxCoeff(), 0.0, 0.0);
}

TEST(Dsln, MatchesLnThenConvOracle) {
  nn::ParamStore<double> ps(2);
  model::Dsln<double> dsln(ps, "d", 6, 4);
  MatD h = random_mat(7, 4, 4);
  MatD e = random_mat(1, 6, 5);
  Tape<double> t;
  auto out = dsln(t, t.leaf(h), t.leaf(e));

  MatD w_flat = e * dsln.w_pred.w->value.transpose() + dsln.w_pred.b->value;
  MatD b = e * dsln.b_pred.w->value.transpose() + dsln.b_pred.b->value;
  MatD w_ck(4, 3);
  for (Eigen::Index c = 0; c < 4; ++c)
    for (int j = 0; j < 3; ++j) w_ck(c, j) = w_flat(0, c * 3 + j);
  MatD expect = dsln_oracle(h, w_ck, b);
  EXPECT_LT((out.value() - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Dsln, GradcheckThroughPredictors) {
  nn::ParamStore<double> ps(3);
  model::Dsln<double> dsln(ps, "d", 6, 4);
  MatD h = random_mat(5, 4, 6);
  MatD e = random_mat(1, 6, 7);
  MatD target = random_mat(5, 4, 8, 2.0, 3.0);
  auto build = [&](Tape<double>& t) {
    return nn::l1_mean(dsln(t, t.leaf(h), t.leaf(e)), target);
  };
  EXPECT_LT(test::max_rel_grad_err_params(ps, build, 16), 1e-4);
}

TEST(BatchShuffle, PermutationSemantics) {
  MatD e = random_mat(4, 6, 9);
  MatD same = model::batch_shuffle(e, {0, 1, 2, 3});
  EXPECT_TRUE(same == e);

  MatD one = model::batch_shuffle(MatD(e.topRows(1)), {0});
  EXPECT_TRUE(one == e.topRows(1));

  MatD shuffled = model::batch_shuffle(e, {2, 0, 3, 1});
  for (int i = 0; i < 4; ++i) EXPECT_TRUE(shuffled.row(i) == e.row(std::vector<int>{2, 0, 3, 1}[i]));

  // Row multiset preserved for any permutation: compare sorted row lists.
  auto sorted_rows = [](const MatD& m) {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      std::vector<double> r(m.cols());
      for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<size_t>(j)] = m(i, j);
      rows.push_back(std::move(r));
    }
    std::sort(rows.begin(), rows.end());
    return rows;
  };
  EXPECT_EQ(sorted_rows(shuffled), sorted_rows(e));

  EXPECT_THROW(model::batch_shuffle(e, {0, 0, 1, 2}), InputError);
  EXPECT_THROW(model::batch_shuffle(e, {0, 1}), InputError);
}

TEST(MixStatistics, EndpointsAndMidpoint) {
  Tape<double> t;
  auto w = t.leaf(MatD::Constant(1, 3, 2.0));
  auto wt = t.leaf(MatD::Constant(1, 3, 4.0));
  auto b = t.leaf(MatD::Constant(1, 3, -1.0));
  auto bt = t.leaf(MatD::Constant(1, 3, 1.0));

  auto [w1, b1] = model::mix_statistics(w, wt, b, bt, 1.0);
  EXPECT_EQ(w1.id, w.id);
  EXPECT_EQ(b1.id, b.id);

  auto [w0, b0] = model::mix_statistics(w, wt, b, bt, 0.0);
  EXPECT_EQ(w0.id, wt.id);
  EXPECT_EQ(b0.id, bt.id);

  auto [wh, bh] = model::mix_statistics(w, wt, b, bt, 0.5);
  EXPECT_DOUBLE_EQ(wh.value()(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(bh.value()(0, 1), 0.0);
}

TEST(Mdsln, DegeneratesToDslnBitExact) {
  nn::ParamStore<double> ps(4);
  model::Dsln<double> dsln(ps, "d", 6, 4);
  Tape<double> t;
  auto h = t.leaf(random_mat(5, 4, 10));
  auto e = t.leaf(random_mat(1, 6, 11));
  auto e_other = t.leaf(random_mat(1, 6, 12));

  MatD plain = dsln(t, h, e).value();
  MatD gamma_one = dsln.mixed(t, h, e, e_other, 1.0).value();
  EXPECT_TRUE((gamma_one.array() == plain.array()).all());

  MatD same_partner = dsln.mixed(t, h, e, e, 0.37).value();
  EXPECT_TRUE((same_partner.array() == plain.array()).all());
}

TEST(Mdsln, MatchesComposedOracle) {
  nn::ParamStore<double> ps(5);
  model::Dsln<double> dsln(ps, "d", 6, 4);
  MatD h = random_mat(6, 4, 13);
  MatD e = random_mat(1, 6, 14);
  MatD et = random_mat(1, 6, 15);
  const double gamma = 0.3;
  Tape<double> t;
  MatD out = dsln.mixed(t, t.leaf(h), t.leaf(e), t.leaf(et), gamma).value();

  auto predict = [&](const MatD& emb, const nn::Linear<double>& lin) {
    return MatD(emb * lin.w->value.transpose() + lin.b->value);
  };
  MatD w_mix = gamma * predict(e, dsln.w_pred) + (1 - gamma) * predict(et, dsln.w_pred);
  MatD b_mix = gamma * predict(e, dsln.b_pred) + (1 - gamma) * predict(et, dsln.b_pred);
  MatD w_ck(4, 3);
  for (Eigen::Index c = 0; c < 4; ++c)
    for (int j = 0; j < 3; ++j) w_ck(c, j) = w_mix(0, c * 3 + j);
  EXPECT_LT((out - dsln_oracle(h, w_ck, b_mix)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SampleGamma, InferenceIsOne) {
  RngStream rng(1);
  EXPECT_EQ(model::sample_gamma(rng, false), 1.0);
  double g = model::sample_gamma(rng, true);
  EXPECT_GT(g, 0.0);
  EXPECT_LT(g, 1.0);
}

TEST(Conformer, ShapePreservedAndAttentionRowsSumToOne) {
  nn::ParamStore<double> ps(6);
  model::ConformerBlock<double> block(ps, "b", 16, model::TailNorm::kLayerNorm, 16, 7, 2);
  model::ForwardCtx<double> ctx;
  for (int n : {1, 3, 9}) {
    Tape<double> t;
    auto out = block(t, t.leaf(random_mat(n, 16, 20 + static_cast<uint64_t>(n))), ctx);
    EXPECT_EQ(out.rows(), n);
    EXPECT_EQ(out.cols(), 16);
  }
  Tape<double> t;
  auto att = block.attn.weights(t, t.leaf(random_mat(7, 16, 21)));
  for (Eigen::Index i = 0; i < att.rows(); ++i)
    EXPECT_NEAR(att.value().row(i).sum(), 1.0, 1e-6);
}

TEST(Conformer, GradcheckAllParams) {
  nn::ParamStore<double> ps(7);
  model::ConformerBlock<double> block(ps, "b", 8, model::TailNorm::kMdsln, 8, 3, 2);
  MatD x = random_mat(5, 8, 22);
  MatD e = random_mat(1, 8, 23);
  MatD et = random_mat(1, 8, 24);
  MatD target = random_mat(5, 8, 25, 2.0, 3.0);
  auto build = [&](Tape<double>& t) {
    model::ForwardCtx<double> ctx;
    ctx.e_s = t.leaf(e);
    ctx.e_s_partner = t.leaf(et);
    ctx.gamma = 0.6;
    return nn::l1_mean(block(t, t.leaf(x), ctx), target);
  };
  EXPECT_LT(test::max_rel_grad_err_params(ps, build, 6), 1e-4);
}

TEST(VariancePredictor, DeterministicWithoutDropoutAndZeroHead) {
  nn::ParamStore<double> ps(8);
  model::VariancePredictor<double> vp(ps, "vp", 8, 1);
  model::ForwardCtx<double> ctx;  // eval: dropout off
  MatD x = random_mat(6, 8, 26);
  Tape<double> t1, t2;
  MatD a = vp(t1, t1.leaf(x), ctx).value();
  MatD b = vp(t2, t2.leaf(x), ctx).value();
  EXPECT_TRUE((a.array() == b.array()).all());

  vp.head.w->value.setZero();
  vp.head.b->value.setZero();
  Tape<double> t3;
  EXPECT_NEAR(vp(t3, t3.leaf(x), ctx).value().cwiseAbs().maxCoeff(), 0.0, 0.0);
}

TEST(VariancePredictor, Gradcheck) {
  nn::ParamStore<double> ps(9);
  model::VariancePredictor<double> vp(ps, "vp", 8, 1);
  MatD x = random_mat(6, 8, 27);
  MatD target = random_mat(6, 1, 28, 2.0, 3.0);
  model::ForwardCtx<double> ctx;
  auto build = [&](Tape<double>& t) { return nn::l1_mean(vp(t, t.leaf(x), ctx), target); };
  EXPECT_LT(test::max_rel_grad_err_params(ps, build, 12), 1e-4);
}

TEST(LdvAdaptor, TeacherForcingAdditivity) {
  nn::ParamStore<double> ps(10);
  model::LdvAdaptor<double> ldv(ps, "ldv", 8);
  model::ForwardCtx<double> ctx;
  MatD h = random_mat(3, 8, 29);
  std::vector<int> pbits = {0, 1, 0}, ebits = {1, 0, 0};
  Tape<double> t;
  auto out = ldv(t, t.leaf(h), ctx, &pbits, &ebits);
  EXPECT_EQ(out.pitch_bits, pbits);
  EXPECT_EQ(out.energy_bits, ebits);

  // The embedding stream is exactly conv(pitch bits) + conv(energy bits).
  auto p_emb = ldv.embed_pitch(t, t.leaf(model::bits_to_column<double>(pbits)));
  auto e_emb = ldv.embed_energy(t, t.leaf(model::bits_to_column<double>(ebits)));
  MatD expect = h + p_emb.value() + e_emb.value();
  EXPECT_LT((out.hidden.value() - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LdvAdaptor, InferenceThresholdsLogits) {
  nn::ParamStore<double> ps(11);
  model::LdvAdaptor<double> ldv(ps, "ldv", 8);
  // Force all logits strongly negative via the head bias.
  ldv.pitch.head.w->value.setZero();
  ldv.pitch.head.b->value.setConstant(-10.0);
  ldv.energy.head.w->value.setZero();
  ldv.energy.head.b->value.setConstant(-10.0);
  model::ForwardCtx<double> ctx;
  Tape<double> t;
  auto out = ldv(t, t.leaf(random_mat(4, 8, 30)), ctx, nullptr, nullptr);
  EXPECT_EQ(out.pitch_bits, (std::vector<int>{0, 0, 0, 0}));
  EXPECT_EQ(out.energy_bits, (std::vector<int>{0, 0, 0, 0}));
}

TEST(LinguisticAdaptor, TrainInjectionIsExactlyConvOfTarget) {
  nn::ParamStore<double> ps(12);
  model::LinguisticAdaptor<double> la(ps, "la", 8);
  model::ForwardCtx<double> ctx;
  MatD h = random_mat(5, 8, 31);
  MatD l_target = random_mat(5, 8, 32);
  Tape<double> t;
  auto out = la(t, t.leaf(h), ctx, t.leaf(l_target));
  auto inj = la.embed(t, t.leaf(l_target));
  EXPECT_LT(((out.hidden.value() - h) - inj.value()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LinguisticAdaptor, InferenceWithZeroedPredictor) {
  nn::ParamStore<double> ps(13);
  model::LinguisticAdaptor<double> la(ps, "la", 8);
  la.predictor.head.w->value.setZero();
  la.predictor.head.b->value.setZero();
  model::ForwardCtx<double> ctx;
  MatD h = random_mat(5, 8, 33);
  Tape<double> t;
  auto out = la(t, t.leaf(h), ctx, nn::Var<double>{});
  auto zero_inj = la.embed(t, t.leaf(MatD::Zero(5, 8)));
  EXPECT_LT(((out.hidden.value() - h) - zero_inj.value()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LinguisticAdaptor, PredictorGradcheck) {
  nn::ParamStore<double> ps(14);
  model::LinguisticAdaptor<double> la(ps, "la", 8);
  MatD h = random_mat(4, 8, 34);
  MatD l_target = random_mat(4, 8, 35, 2.0, 3.0);
  model::ForwardCtx<double> ctx;
  auto build = [&](Tape<double>& t) {
    auto out = la(t, t.leaf(h), ctx, t.leaf(l_target));
    return nn::l1_mean(out.pred, l_target);
  };
  EXPECT_LT(test::max_rel_grad_err_params(ps, build, 12), 1e-4);
}

TEST(LinguisticEncoder, WidthAndDeterminism) {
  nn::ParamStore<double> ps(15);
  model::LinguisticEncoder<double> enc(ps, "le", 12, 8);
  MatD ssl = random_mat(9, 12, 36);
  Tape<double> t1, t2;
  MatD a = enc(t1, t1.leaf(ssl)).value();
  MatD b = enc(t2, t2.leaf(ssl)).value();
  EXPECT_EQ(a.cols(), 8);
  EXPECT_EQ(a.rows(), 9);
  EXPECT_TRUE((a.array() == b.array()).all());
}

TEST(LinguisticEncoder, Gradcheck) {
  nn::ParamStore<double> ps(16);
  model::LinguisticEncoder<double> enc(ps, "le", 12, 8);
  MatD ssl = random_mat(6, 12, 37);
  MatD target = random_mat(6, 8, 38, 2.0, 3.0);
  auto build = [&](Tape<double>& t) { return nn::l1_mean(enc(t, t.leaf(ssl)), target); };
  EXPECT_LT(test::max_rel_grad_err_params(ps, build, 12), 1e-4);
}

TEST(TextPredictor, ShapeAndFiniteness) {
  nn::ParamStore<double> ps(17);
  model::TextPredictor<double> tp(ps, "tp", 8, 5, 1);
  model::ForwardCtx<double> ctx;
  Tape<double> t;
  auto logits = tp(t, t.leaf(random_mat(7, 8, 39)), ctx);
  EXPECT_EQ(logits.rows(), 7);
  EXPECT_EQ(logits.cols(), 6);  // vocab + blank
  EXPECT_TRUE(logits.value().allFinite());
}

TEST(TextPredictor, GradcheckThroughCtc) {
  nn::ParamStore<double> ps(18);
  model::TextPredictor<double> tp(ps, "tp", 8, 3, 1);
  MatD z = random_mat(5, 8, 40);
  std::vector<int> target = {1, 0};
  model::ForwardCtx<double> ctx;
  auto build = [&](Tape<double>& t) {
    return train::ctc_loss(tp(t, t.leaf(z), ctx), target);
  };
  EXPECT_LT(test::max_rel_grad_err_params(ps, build, 8), 1e-4);
}

// --- full-model tests -------------------------------------------------------

namespace {

struct FullFixture {
  nn::ParamStore<double> ps{99};
  model::ModelConfig cfg = tiny_config();
  model::Model<double> net{ps, cfg};

  std::vector<int> tokens = {1, 3, 0};
  MatD mel, pitch, energy, sd_pitch, sd_energy, ssl;

  FullFixture() {
    const int t_len = 9;
    mel = random_mat(t_len, cfg.mel_bins, 50, -4.0, 2.0);
    pitch = random_mat(t_len, 1, 51, 100.0, 200.0);
    energy = random_mat(t_len, 1, 52, -5.0, 0.0);
    sd_pitch = random_mat(t_len, 1, 53, -1.0, 1.0);
    sd_energy = energy;
    ssl = random_mat(t_len, cfg.d_ssl, 54);
  }

  model::TeacherSet<double> teacher() const {
    model::TeacherSet<double> ts;
    ts.mel = &mel;
    ts.pitch_track = &pitch;
    ts.energy_track = &energy;
    ts.sd_pitch = &sd_pitch;
    ts.sd_energy = &sd_energy;
    ts.ssl = &ssl;
    return ts;
  }
};

}  // namespace

TEST(FullModel, EmbedTextErrorsAndConditioning) {
  FullFixture f;
  Tape<double> t;
  try {
    f.net.embed_text(t, f.tokens, 0, 7);
    FAIL() << "expected lookup error";
  } catch (const LookupError& e) {
    EXPECT_NE(std::string(e.what()).find("7"), std::string::npos);
  }
  EXPECT_THROW(f.net.embed_text(t, {0, 9}, 0, 0), LookupError);
  EXPECT_THROW(f.net.embed_text(t, {}, 0, 0), InputError);

  auto a = f.net.embed_text(t, f.tokens, 0, 0);
  auto b = f.net.embed_text(t, f.tokens, 1, 0);
  EXPECT_GT((a.hidden.value() - b.hidden.value()).cwiseAbs().maxCoeff(), 0.0);

  // Zeroed language table: hidden equals the raw token embedding.
  nn::ParamStore<double> ps2(100);
  model::Model<double> net2(ps2, f.cfg);
  ps2.find("embed.language")->value.setZero();
  Tape<double> t2;
  auto em = net2.embed_text(t2, f.tokens, 1, 0);
  MatD raw(3, f.cfg.hidden);
  for (int i = 0; i < 3; ++i)
    raw.row(i) = ps2.find("embed.token")->value.row(f.tokens[static_cast<size_t>(i)]);
  EXPECT_TRUE((em.hidden.value().array() == raw.array()).all());
}

TEST(FullModel, TrainForwardShapesAndDurations) {
  FullFixture f;
  Tape<double> t;
  model::ForwardCtx<double> ctx;
  ctx.training = true;
  ctx.gamma = 0.5;
  auto out = f.net.train_forward(t, f.tokens, 0, 1, f.teacher(), ctx, 2);

  EXPECT_EQ(out.mel.rows(), 9);
  EXPECT_EQ(out.mel.cols(), f.cfg.mel_bins);
  EXPECT_EQ(static_cast<int>(out.durations.size()), 3);
  int sum = 0;
  for (int d : out.durations) {
    EXPECT_GE(d, 1);
    sum += d;
  }
  EXPECT_EQ(sum, 9);
  EXPECT_EQ(out.dur_logits.rows(), 3);
  EXPECT_EQ(out.ldp_logits.rows(), 3);
  EXPECT_EQ(out.ctc_logits.cols(), f.cfg.vocab_size + 1);
  EXPECT_EQ(out.l_pred.cols(), f.cfg.hidden);
  EXPECT_EQ(out.sd_pitch_pred.rows(), 9);
}

TEST(FullModel, OutputIsExactSumOfProjections) {
  FullFixture f;
  Tape<double> t;
  model::ForwardCtx<double> ctx;
  ctx.training = true;
  auto out = f.net.train_forward(t, f.tokens, 0, 1, f.teacher(), ctx);
  MatD residual = out.mel.value() - (out.ld_proj.value() + out.sd_proj.value());
  EXPECT_NEAR(residual.cwiseAbs().maxCoeff(), 0.0, 0.0);
}

TEST(FullModel, ZeroedSdProjectionLeavesLdStream) {
  FullFixture f;
  f.ps.find("proj.sd.w")->value.setZero();
  f.ps.find("proj.sd.b")->value.setZero();
  Tape<double> t;
  model::ForwardCtx<double> ctx;
  ctx.training = true;
  auto out = f.net.train_forward(t, f.tokens, 0, 1, f.teacher(), ctx);
  EXPECT_TRUE((out.mel.value().array() == out.ld_proj.value().array()).all());
}

TEST(FullModel, ChangingSpeakerChangesSdStream) {
  FullFixture f;
  Tape<double> t;
  model::ForwardCtx<double> ctx1, ctx2;
  ctx1.training = true;
  ctx2.training = true;
  auto a = f.net.train_forward(t, f.tokens, 0, 0, f.teacher(), ctx1);
  auto b = f.net.train_forward(t, f.tokens, 0, 2, f.teacher(), ctx2);
  EXPECT_GT((a.sd_proj.value() - b.sd_proj.value()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FullModel, InferForwardPredictsEverything) {
  FullFixture f;
  Tape<double> t;
  auto out = f.net.infer_forward(t, f.tokens, 1, 2);
  int sum = 0;
  for (int d : out.durations) {
    EXPECT_GE(d, 1);
    sum += d;
  }
  EXPECT_EQ(out.mel.rows(), sum);
  EXPECT_TRUE(out.mel.value().allFinite());
  EXPECT_EQ(out.ldp_bits.size(), f.tokens.size());
}

TEST(FullModel, TeacherForcingZeroedEmbeddingLeavesBackbone) {
  // Disabling a variance embedding conv (zero weights+bias) must leave the
  // backbone output unchanged between two teacher-forced passes with
  // different binary targets.
  FullFixture f;
  f.ps.find("ldv.emb_p.w")->value.setZero();
  f.ps.find("ldv.emb_p.b")->value.setZero();
  model::ForwardCtx<double> ctx;
  ctx.training = true;

  // Same everything except the pitch bits consumed by the adaptor; with a
  // zeroed embedding the hidden stream cannot depend on them. Compare mels
  // from two passes whose durations are forced equal by the same teacher.
  Tape<double> t1, t2;
  auto o1 = f.net.train_forward(t1, f.tokens, 0, 1, f.teacher(), ctx);
  MatD pitch_flipped = f.pitch.reverse().eval();
  FullFixture g;  // fresh fixture to rebuild with same seed; then swap field
  (void)g;
  // Flip the raw pitch track: LD pitch bits change, the embedded stream is
  // zeroed, so the mel must be identical as long as durations match.
  model::TeacherSet<double> ts = f.teacher();
  MatD flipped = pitch_flipped;
  ts.pitch_track = &flipped;
  model::ForwardCtx<double> ctx2;
  ctx2.training = true;
  auto o2 = f.net.train_forward(t2, f.tokens, 0, 1, ts, ctx2);
  ASSERT_EQ(o1.durations, o2.durations);
  EXPECT_TRUE((o1.mel.value().array() == o2.mel.value().array()).all());
}

TEST(FullModel, EndToEndGradientMatchesFiniteDifferences) {
  // Gradient of the mel L1 with respect to the token embedding table on a
  // 2-token, 6-frame instance.
  nn::ParamStore<double> ps(123);
  model::ModelConfig cfg = tiny_config();
  model::Model<double> net(ps, cfg);

  std::vector<int> tokens = {2, 4};
  MatD mel = random_mat(6, cfg.mel_bins, 60, -3.0, 1.0);
  MatD pitch = random_mat(6, 1, 61, 100.0, 200.0);
  MatD energy = random_mat(6, 1, 62, -4.0, 0.0);
  MatD sd_pitch = random_mat(6, 1, 63, -1.0, 1.0);
  MatD ssl = random_mat(6, cfg.d_ssl, 64);

  model::TeacherSet<double> ts;
  ts.mel = &mel;
  ts.pitch_track = &pitch;
  ts.energy_track = &energy;
  ts.sd_pitch = &sd_pitch;
  ts.sd_energy = &energy;
  ts.ssl = &ssl;

  auto build = [&](Tape<double>& t) {
    model::ForwardCtx<double> ctx;
    ctx.training = true;
    ctx.gamma = 1.0;  // keep the path deterministic
    auto out = net.train_forward(t, tokens, 0, 1, ts, ctx);
    return nn::l1_mean(out.mel, mel);
  };

  // Restrict finite differences to the token table (plus spot checks on two
  // other parameter groups) to keep runtime small.
  Tape<double> tape;
  auto loss = build(tape);
  tape.backward(loss);

  RngStream rng(7);
  double worst = 0;
  for (const char* name : {"embed.token", "proj.sd.w", "ld_enc.block0.attn.q.w"}) {
    nn::Param<double>* p = ps.find(name);
    ASSERT_NE(p, nullptr) << name;
    auto node = tape.find_param(p);
    ASSERT_TRUE(node.valid()) << name;
    const MatD& g = tape.grad_ref(node.id);
    for (int i = 0; i < 12; ++i) {
      Eigen::Index c = static_cast<Eigen::Index>(rng.uniform_index(p->value.size()));
      double orig = p->value.data()[c];
      double h = 1e-5 * std::max(1.0, std::fabs(orig));
      p->value.data()[c] = orig + h;
      Tape<double> tp;
      double lp = build(tp).scalar();
      p->value.data()[c] = orig - h;
      Tape<double> tm;
      double lm = build(tm).scalar();
      p->value.data()[c] = orig;
      double numeric = (lp - lm) / (2 * h);
      worst = std::max(worst, test::rel_err(g(c), numeric));
    }
  }
  EXPECT_LT(worst, 1e-3);
}
