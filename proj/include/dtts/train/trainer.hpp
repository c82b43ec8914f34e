#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "dtts/model/net.hpp"
#include "dtts/train/losses.hpp"
#include "dtts/train/optim.hpp"

namespace dtts::train {

// One utterance with every supervision target materialized in memory.
template <typename Real>
struct TrainItem {
  std::string id;
  std::vector<int> tokens;
  int lang = 0;
  int spk = 0;
  Mat<Real> mel;               // T x 80
  MatD pitch_track;            // T x 1 raw Hz, 0 = unvoiced
  MatD energy_track;           // T x 1
  Mat<Real> sd_pitch;          // T x 1 standardized
  Mat<Real> sd_energy;         // T x 1
  Mat<Real> ssl;               // T' x d_ssl
};

template <typename Real>
struct TrainerConfig {
  OptimizerConfig opt;
  uint64_t seed = 0;
  int batch_size = 4;
  long steps_per_epoch = 1;
  long aligner_prior_steps = 500;
  double dropout = 0.1;
};

// Per-item stochastic context; exposed so tests can align noise streams
// across different batch partitions.
struct ItemNoise {
  double gamma = 1.0;
  uint64_t dropout_seed = 0;
  int partner_spk = -1;
};

namespace seed_tag {
constexpr uint64_t kShuffle = 1;
constexpr uint64_t kGamma = 2;
constexpr uint64_t kDropout = 3;
constexpr uint64_t kBatchOrder = 4;
}  // namespace seed_tag

template <typename Real>
class Trainer {
 public:
  Trainer(model::Model<Real>& net, nn::ParamStore<Real>& ps, TrainerConfig<Real> cfg)
      : net_(net), ps_(ps), cfg_(cfg), opt_(cfg.opt) {}

  long step() const { return step_; }
  long epoch() const { return step_ / cfg_.steps_per_epoch; }
  double current_lr() const { return opt_.lr_for_epoch(epoch()); }
  AdamW<Real>& optimizer() { return opt_; }
  const TrainerConfig<Real>& config() const { return cfg_; }

  void restore(long step_index, long opt_step) {
    step_ = step_index;
    accumulated_ = static_cast<int>(step_index % cfg_.opt.accumulation);
    opt_.set_step_count(opt_step);
  }

  // Draws this step's noise from streams derived from (seed, step), so the
  // whole run is a pure function of the seed and the item sequence.
  std::vector<ItemNoise> draw_noise(size_t batch_size,
                                    const std::vector<const TrainItem<Real>*>& batch) const {
    std::vector<ItemNoise> noise(batch_size);
    RngStream shuffle_rng =
        RngStream::derive(cfg_.seed, {seed_tag::kShuffle, static_cast<uint64_t>(step_)});
    std::vector<size_t> perm;
    shuffle_rng.permutation(batch_size, perm);
    RngStream gamma_rng =
        RngStream::derive(cfg_.seed, {seed_tag::kGamma, static_cast<uint64_t>(step_)});
    for (size_t i = 0; i < batch_size; ++i) {
      noise[i].gamma = gamma_rng.beta22();
      noise[i].partner_spk = batch[perm[i]]->spk;
      noise[i].dropout_seed = RngStream::derive(
          cfg_.seed, {seed_tag::kDropout, static_cast<uint64_t>(step_), i}).next_u64();
    }
    return noise;
  }

  LossBreakdown<Real> train_step(const std::vector<const TrainItem<Real>*>& batch) {
    return train_step_with_noise(batch, draw_noise(batch.size(), batch));
  }

  LossBreakdown<Real> train_step_with_noise(const std::vector<const TrainItem<Real>*>& batch,
                                            const std::vector<ItemNoise>& noise) {
    require(!batch.empty() && noise.size() == batch.size(), "train_step: bad batch");
    const Real inv_batch = Real(1) / static_cast<Real>(batch.size());
    LossBreakdown<Real> mean{};

    bool ok = true;
    for (size_t i = 0; i < batch.size(); ++i) {
      const TrainItem<Real>& item = *batch[i];
      nn::Tape<Real> tape;
      RngStream drop_rng(noise[i].dropout_seed);
      model::ForwardCtx<Real> ctx;
      ctx.training = true;
      ctx.dropout = static_cast<Real>(cfg_.dropout);
      ctx.rng = &drop_rng;
      ctx.gamma = static_cast<Real>(noise[i].gamma);

      model::TeacherSet<Real> ts;
      ts.mel = &item.mel;
      ts.pitch_track = &item.pitch_track;
      ts.energy_track = &item.energy_track;
      ts.sd_pitch = &item.sd_pitch;
      ts.sd_energy = &item.sd_energy;
      ts.ssl = &item.ssl;
      ts.alignment_prior = step_ < cfg_.aligner_prior_steps;

      try {
        auto fwd = net_.train_forward(tape, item.tokens, item.lang, item.spk, ts, ctx,
                                      noise[i].partner_spk);
        LossBreakdown<Real> bd{};
        nn::Var<Real> total = assemble_losses(tape, item, fwd, &bd);
        tape.backward(nn::scale(total, inv_batch));
        ps_.accumulate_from(tape);
        accumulate(mean, bd, inv_batch);
      } catch (const NonFiniteLossError& e) {
        std::fprintf(stderr, "step %ld item %s: %s; batch skipped\n", step_ + 1,
                     item.id.c_str(), e.what());
        ps_.zero_grad();
        ok = false;
        break;
      }
    }

    if (ok) {
      ++accumulated_;
      if (accumulated_ >= cfg_.opt.accumulation) {
        bool finite = true;
        for (const auto& p : ps_.all())
          if (!p->grad.allFinite()) {
            finite = false;
            break;
          }
        if (finite) {
          opt_.step(ps_, current_lr(), Real(1) / static_cast<Real>(cfg_.opt.accumulation));
        } else {
          std::fprintf(stderr, "step %ld: non-finite gradient, update skipped\n",
                       step_ + 1);
          ps_.zero_grad();
        }
        accumulated_ = 0;
      }
    }
    ++step_;
    return mean;
  }

  // Teacher-forced evaluation-mode mel L1 over a validation set.
  double validate(const std::vector<TrainItem<Real>>& items) const {
    if (items.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& item : items) {
      nn::Tape<Real> tape;
      model::ForwardCtx<Real> ctx;  // eval: dropout off, gamma 1, self partner
      model::TeacherSet<Real> ts;
      ts.mel = &item.mel;
      ts.pitch_track = &item.pitch_track;
      ts.energy_track = &item.energy_track;
      ts.sd_pitch = &item.sd_pitch;
      ts.sd_energy = &item.sd_energy;
      ts.ssl = &item.ssl;
      auto fwd = net_.train_forward(tape, item.tokens, item.lang, item.spk, ts, ctx);
      acc += static_cast<double>(nn::l1_mean(fwd.mel, item.mel).scalar());
    }
    return acc / static_cast<double>(items.size());
  }

  nn::Var<Real> assemble_losses(nn::Tape<Real>& tape, const TrainItem<Real>& item,
                                const model::ForwardOut<Real>& fwd,
                                LossBreakdown<Real>* bd) const {
    LossTerms<Real> terms;
    terms.mel = nn::l1_mean(fwd.mel, item.mel);
    terms.align = nn::add(align::forward_sum_loss(fwd.log_a),
                          align::binarization_loss(fwd.log_a, fwd.durations));

    Mat<Real> dur_target(static_cast<Eigen::Index>(fwd.durations.size()), 1);
    for (size_t i = 0; i < fwd.durations.size(); ++i)
      dur_target(static_cast<Eigen::Index>(i), 0) =
          static_cast<Real>(std::log(1.0 + fwd.durations[i]));
    terms.dur = nn::l1_mean(fwd.dur_logits, dur_target);

    terms.ldp = nn::bce_logits_sum(fwd.ldp_logits,
                                   model::bits_to_column<Real>(fwd.ldp_bits));
    terms.lde = nn::bce_logits_sum(fwd.lde_logits,
                                   model::bits_to_column<Real>(fwd.lde_bits));

    nn::Var<Real> l_pred_valid = nn::slice_rows(fwd.l_pred, 0, fwd.l_valid_rows);
    Mat<Real> l_target_valid = fwd.l_target.topRows(fwd.l_valid_rows);
    terms.lin = nn::l1_mean(l_pred_valid, l_target_valid);

    terms.ctc = ctc_loss(fwd.ctc_logits, item.tokens);
    terms.sdp = nn::l1_mean(fwd.sd_pitch_pred, item.sd_pitch);
    terms.sde = nn::l1_mean(fwd.sd_energy_pred, item.sd_energy);
    return total_loss(terms, bd);
  }

 private:
  static void accumulate(LossBreakdown<Real>& acc, const LossBreakdown<Real>& bd, Real w) {
    acc.mel += w * bd.mel;
    acc.align += w * bd.align;
    acc.dur += w * bd.dur;
    acc.ldp += w * bd.ldp;
    acc.lde += w * bd.lde;
    acc.lin += w * bd.lin;
    acc.ctc += w * bd.ctc;
    acc.sdp += w * bd.sdp;
    acc.sde += w * bd.sde;
    acc.total += w * bd.total;
  }

  model::Model<Real>& net_;
  nn::ParamStore<Real>& ps_;
  TrainerConfig<Real> cfg_;
  AdamW<Real> opt_;
  long step_ = 0;
  int accumulated_ = 0;
};

}  // namespace dtts::train
