#pragma once

#include <string>
#include <vector>

#include "dtts/align/aligner.hpp"
#include "dtts/model/adaptors.hpp"
#include "dtts/model/conformer.hpp"
#include "dtts/model/dsln.hpp"
#include "dtts/model/linguistic.hpp"
#include "dtts/targets/targets.hpp"

namespace dtts::model {

struct ModelConfig {
  Eigen::Index hidden = 192;
  int ld_encoder_blocks = 4;
  int ld_decoder_blocks = 2;
  int sd_encoder_blocks = 2;
  int sd_decoder_blocks = 2;
  int text_predictor_blocks = 2;
  int conv_kernel = 7;
  int ff_mult = 4;
  int dsln_kernel = 3;
  Eigen::Index mel_bins = 80;
  Eigen::Index d_ssl = 1024;
  int vocab_size = 0;
  int num_languages = 0;
  int num_speakers = 0;
  double dropout = 0.1;
};

// Everything a forward pass produces; loss assembly and diagnostics pick
// what they need. log_a is only valid when a target mel drove the aligner.
template <typename Real>
struct ForwardOut {
  nn::Var<Real> log_a;
  std::vector<int> durations;
  nn::Var<Real> dur_logits, ldp_logits, lde_logits;
  std::vector<int> ldp_bits, lde_bits;
  nn::Var<Real> l_pred;
  Mat<Real> l_target;     // stop-gradient copy, T rows (tail-padded if needed)
  Eigen::Index l_valid_rows = 0;
  nn::Var<Real> ctc_logits;  // T' x (vocab+1)
  nn::Var<Real> sd_pitch_pred, sd_energy_pred;
  nn::Var<Real> ld_hidden;   // LD stream after the linguistic adaptor, T x 192
  nn::Var<Real> ld_proj, sd_proj;  // T x 80 each
  nn::Var<Real> mel;               // ld_proj + sd_proj
};

// Ground-truth inputs for a teacher-forced pass.
template <typename Real>
struct TeacherSet {
  const Mat<Real>* mel = nullptr;       // T x 80
  const MatD* pitch_track = nullptr;    // T x 1, raw Hz (0 = unvoiced)
  const MatD* energy_track = nullptr;   // T x 1
  const Mat<Real>* sd_pitch = nullptr;  // T x 1, standardized
  const Mat<Real>* sd_energy = nullptr; // T x 1
  const Mat<Real>* ssl = nullptr;       // T' x d_ssl
  bool alignment_prior = false;
};

// The decoupled generation network: a language-dependent generator (LD
// conformer encoder with MDSLN tails, LDV adaptor, LD decoder, linguistic
// adaptor) followed by a speaker-dependent generator (SD encoder with DSLN
// tails, SDV adaptor, SD decoder). The output mel is the sum of the two
// projected streams.
template <typename Real>
class Model {
 public:
  Model(nn::ParamStore<Real>& ps, const ModelConfig& cfg) : cfg_(cfg) {
    require(cfg.vocab_size > 0 && cfg.num_languages > 0 && cfg.num_speakers > 0,
            "model: vocab/language/speaker table sizes must be set");
    tok_table_ = &ps.add("embed.token", cfg.vocab_size, cfg.hidden, nn::Init::kNormal, 0.5);
    lang_table_ =
        &ps.add("embed.language", cfg.num_languages, cfg.hidden, nn::Init::kNormal, 0.5);
    spk_table_ =
        &ps.add("embed.speaker", cfg.num_speakers, cfg.hidden, nn::Init::kNormal, 0.5);

    for (int i = 0; i < cfg.ld_encoder_blocks; ++i)
      ld_encoder_.emplace_back(ps, "ld_enc.block" + std::to_string(i), cfg.hidden,
                               TailNorm::kMdsln, cfg.hidden, cfg.conv_kernel, cfg.ff_mult,
                               cfg.dsln_kernel);
    aligner_ = align::Aligner<Real>(ps, cfg.mel_bins, cfg.hidden);
    ldv_ = LdvAdaptor<Real>(ps, "ldv", cfg.hidden);
    for (int i = 0; i < cfg.ld_decoder_blocks; ++i)
      ld_decoder_.emplace_back(ps, "ld_dec.block" + std::to_string(i), cfg.hidden,
                               TailNorm::kLayerNorm, cfg.hidden, cfg.conv_kernel,
                               cfg.ff_mult, cfg.dsln_kernel);
    linguistic_adaptor_ = LinguisticAdaptor<Real>(ps, "ling_adaptor", cfg.hidden);
    linguistic_encoder_ =
        LinguisticEncoder<Real>(ps, "ling_enc", cfg.d_ssl, cfg.hidden);
    text_predictor_ = TextPredictor<Real>(ps, "text_pred", cfg.hidden, cfg.vocab_size,
                                          cfg.text_predictor_blocks);

    for (int i = 0; i < cfg.sd_encoder_blocks; ++i)
      sd_encoder_.emplace_back(ps, "sd_enc.block" + std::to_string(i), cfg.hidden,
                               TailNorm::kDsln, cfg.hidden, cfg.conv_kernel, cfg.ff_mult,
                               cfg.dsln_kernel);
    sdv_ = SdvAdaptor<Real>(ps, "sdv", cfg.hidden);
    for (int i = 0; i < cfg.sd_decoder_blocks; ++i)
      sd_decoder_.emplace_back(ps, "sd_dec.block" + std::to_string(i), cfg.hidden,
                               TailNorm::kLayerNorm, cfg.hidden, cfg.conv_kernel,
                               cfg.ff_mult, cfg.dsln_kernel);

    proj_ld_ = nn::Conv1d<Real>(ps, "proj.ld", cfg.hidden, cfg.mel_bins, 1);
    proj_sd_ = nn::Conv1d<Real>(ps, "proj.sd", cfg.hidden, cfg.mel_bins, 1);
  }

  const ModelConfig& config() const { return cfg_; }
  const align::Aligner<Real>& aligner() const { return aligner_; }
  const LinguisticEncoder<Real>& linguistic_encoder() const { return linguistic_encoder_; }

  struct EmbedOut {
    nn::Var<Real> hidden;  // L x hidden, token embedding + language embedding
    nn::Var<Real> e_l;
    nn::Var<Real> e_s;
  };

  EmbedOut embed_text(nn::Tape<Real>& t, const std::vector<int>& tokens, int lang,
                      int spk) const {
    require(!tokens.empty(), "embed_text: empty token sequence");
    for (int id : tokens)
      if (id < 0 || id >= cfg_.vocab_size)
        throw LookupError("unknown token id " + std::to_string(id));
    if (lang < 0 || lang >= cfg_.num_languages)
      throw LookupError("unknown language id " + std::to_string(lang));
    if (spk < 0 || spk >= cfg_.num_speakers)
      throw LookupError("unknown speaker id " + std::to_string(spk));

    EmbedOut out;
    out.e_l = nn::gather_rows(nn::use(t, *lang_table_), {lang});
    out.e_s = nn::gather_rows(nn::use(t, *spk_table_), {spk});
    nn::Var<Real> tok = nn::gather_rows(nn::use(t, *tok_table_), tokens);
    out.hidden = nn::add_rowvec(tok, out.e_l);
    return out;
  }

  nn::Var<Real> speaker_embedding(nn::Tape<Real>& t, int spk) const {
    if (spk < 0 || spk >= cfg_.num_speakers)
      throw LookupError("unknown speaker id " + std::to_string(spk));
    return nn::gather_rows(nn::use(t, *spk_table_), {spk});
  }

  nn::Var<Real> ld_encode(nn::Tape<Real>& t, nn::Var<Real> h0,
                          const ForwardCtx<Real>& ctx) const {
    nn::Var<Real> h = nn::add(h0, t.leaf(sinusoidal_pe<Real>(h0.rows(), cfg_.hidden)));
    for (const auto& b : ld_encoder_) h = b(t, h, ctx);
    return h;
  }

  // Teacher-forced pass. LD binary targets are rebuilt from the raw pitch
  // and energy tracks with the durations the aligner picked this step.
  // partner_spk < 0 (or == spk) reuses the item's own embedding node, which
  // keeps MDSLN on the unmixed computation path.
  ForwardOut<Real> train_forward(nn::Tape<Real>& t, const std::vector<int>& tokens,
                                 int lang, int spk, const TeacherSet<Real>& teacher,
                                 ForwardCtx<Real>& ctx, int partner_spk = -1) const {
    require(teacher.mel && teacher.pitch_track && teacher.energy_track &&
                teacher.sd_pitch && teacher.sd_energy && teacher.ssl,
            "train_forward: incomplete teacher set");
    const Eigen::Index t_len = teacher.mel->rows();

    EmbedOut em = embed_text(t, tokens, lang, spk);
    ctx.e_s = em.e_s;
    ctx.e_s_partner = (partner_spk < 0 || partner_spk == spk)
                          ? em.e_s
                          : speaker_embedding(t, partner_spk);

    nn::Var<Real> enc_in =
        nn::add(em.hidden, t.leaf(sinusoidal_pe<Real>(em.hidden.rows(), cfg_.hidden)));
    nn::Var<Real> h_enc = enc_in;
    for (const auto& b : ld_encoder_) h_enc = b(t, h_enc, ctx);

    ForwardOut<Real> out;
    out.log_a = aligner_.log_alignment(t, enc_in, *teacher.mel, teacher.alignment_prior);
    out.durations = align::viterbi_durations(out.log_a.value().template cast<double>());

    targets::LdTargets ld = targets::build_ld_targets(*teacher.pitch_track,
                                                      *teacher.energy_track, out.durations);

    auto ldv = ldv_(t, h_enc, ctx, &ld.pitch, &ld.energy);
    out.dur_logits = ldv.dur_logits;
    out.ldp_logits = ldv.pitch_logits;
    out.lde_logits = ldv.energy_logits;
    out.ldp_bits = ldv.pitch_bits;
    out.lde_bits = ldv.energy_bits;

    nn::Var<Real> frames = nn::repeat_rows(ldv.hidden, out.durations);
    require(frames.rows() == t_len, "train_forward: durations do not sum to T");
    finish_from_frames(t, frames, teacher.ssl, teacher.sd_pitch, teacher.sd_energy, ctx,
                       out);
    return out;
  }

  // Inference pass: durations, binary variations, linguistic stream and SD
  // tracks all come from the model's own predictions.
  ForwardOut<Real> infer_forward(nn::Tape<Real>& t, const std::vector<int>& tokens,
                                 int lang, int spk) const {
    EmbedOut em = embed_text(t, tokens, lang, spk);
    ForwardCtx<Real> ctx;
    ctx.training = false;
    ctx.gamma = Real(1);
    ctx.e_s = em.e_s;
    ctx.e_s_partner = em.e_s;

    nn::Var<Real> enc_in =
        nn::add(em.hidden, t.leaf(sinusoidal_pe<Real>(em.hidden.rows(), cfg_.hidden)));
    nn::Var<Real> h_enc = enc_in;
    for (const auto& b : ld_encoder_) h_enc = b(t, h_enc, ctx);

    ForwardOut<Real> out;
    auto ldv = ldv_(t, h_enc, ctx, nullptr, nullptr);
    out.dur_logits = ldv.dur_logits;
    out.ldp_logits = ldv.pitch_logits;
    out.lde_logits = ldv.energy_logits;
    out.ldp_bits = ldv.pitch_bits;
    out.lde_bits = ldv.energy_bits;

    // Duration head predicts log(d + 1); round and clamp to >= 1.
    out.durations.resize(tokens.size());
    for (size_t i = 0; i < tokens.size(); ++i) {
      const double raw =
          std::exp(static_cast<double>(ldv.dur_logits.value()(static_cast<Eigen::Index>(i), 0))) -
          1.0;
      out.durations[i] = std::max(1, static_cast<int>(std::lround(raw)));
    }

    nn::Var<Real> frames = nn::repeat_rows(ldv.hidden, out.durations);
    finish_from_frames(t, frames, nullptr, nullptr, nullptr, ctx, out);
    return out;
  }

 private:
  void finish_from_frames(nn::Tape<Real>& t, nn::Var<Real> frames,
                          const Mat<Real>* ssl, const Mat<Real>* sd_pitch,
                          const Mat<Real>* sd_energy, const ForwardCtx<Real>& ctx,
                          ForwardOut<Real>& out) const {
    const Eigen::Index t_len = frames.rows();
    nn::Var<Real> h = nn::add(frames, t.leaf(sinusoidal_pe<Real>(t_len, cfg_.hidden)));
    for (const auto& b : ld_decoder_) h = b(t, h, ctx);

    nn::Var<Real> l_target_var;
    if (ssl) {
      // The linguistic-target branch is stop-gradded: the CTC pathway keeps
      // its own gradient route through ctc_logits below.
      nn::Var<Real> z = linguistic_encoder_(t, t.leaf(*ssl));
      out.ctc_logits = text_predictor_(t, z, ctx);
      const Eigen::Index t_ssl = z.rows();
      out.l_valid_rows = std::min(t_len, t_ssl);
      out.l_target.resize(t_len, cfg_.hidden);
      out.l_target.topRows(out.l_valid_rows) = z.value().topRows(out.l_valid_rows);
      for (Eigen::Index r = out.l_valid_rows; r < t_len; ++r)
        out.l_target.row(r) = z.value().row(t_ssl - 1);
      l_target_var = t.leaf(out.l_target);
    }

    auto ling = linguistic_adaptor_(t, h, ctx, l_target_var);
    out.l_pred = ling.pred;
    out.ld_hidden = ling.hidden;

    nn::Var<Real> sd = ling.hidden;
    for (const auto& b : sd_encoder_) sd = b(t, sd, ctx);
    auto sdv = sdv_(t, sd, ctx, sd_pitch, sd_energy);
    out.sd_pitch_pred = sdv.pitch_pred;
    out.sd_energy_pred = sdv.energy_pred;

    nn::Var<Real> sd_h = sdv.hidden;
    for (const auto& b : sd_decoder_) sd_h = b(t, sd_h, ctx);

    out.ld_proj = proj_ld_(t, ling.hidden);
    out.sd_proj = proj_sd_(t, sd_h);
    out.mel = nn::add(out.ld_proj, out.sd_proj);
  }

  ModelConfig cfg_;
  nn::Param<Real>* tok_table_ = nullptr;
  nn::Param<Real>* lang_table_ = nullptr;
  nn::Param<Real>* spk_table_ = nullptr;
  std::vector<ConformerBlock<Real>> ld_encoder_, ld_decoder_, sd_encoder_, sd_decoder_;
  align::Aligner<Real> aligner_;
  LdvAdaptor<Real> ldv_;
  LinguisticAdaptor<Real> linguistic_adaptor_;
  LinguisticEncoder<Real> linguistic_encoder_;
  TextPredictor<Real> text_predictor_;
  SdvAdaptor<Real> sdv_;
  nn::Conv1d<Real> proj_ld_, proj_sd_;
};

}  // namespace dtts::model
