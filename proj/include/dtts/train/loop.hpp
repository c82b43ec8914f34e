#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "dtts/train/checkpoint.hpp"
#include "dtts/train/trainer.hpp"

namespace dtts::train {

template <typename Real>
struct RunConfig {
  long steps = 1000;
  long checkpoint_every = 0;  // 0: only the final checkpoint; must be a
                              // multiple of the accumulation interval
  long validate_every = 0;
  std::string out_dir;
  std::string config_text;  // stored inside checkpoints
};

// Batch composition is a pure function of (seed, step): the epoch's item
// order comes from a stream derived from the epoch index, and the step picks
// its slice. This is what makes checkpoint resume bit-exact.
template <typename Real>
std::vector<const TrainItem<Real>*> compose_batch(const std::vector<TrainItem<Real>>& items,
                                                  uint64_t seed, long step, int batch_size,
                                                  long steps_per_epoch) {
  const long epoch = step / steps_per_epoch;
  const long slot = step % steps_per_epoch;
  RngStream rng = RngStream::derive(
      seed, {seed_tag::kBatchOrder, static_cast<uint64_t>(epoch)});
  std::vector<size_t> order;
  rng.permutation(items.size(), order);
  std::vector<const TrainItem<Real>*> batch;
  for (long i = slot * batch_size;
       i < std::min<long>(static_cast<long>(items.size()), (slot + 1) * batch_size); ++i)
    batch.push_back(&items[order[static_cast<size_t>(i)]]);
  return batch;
}

inline long steps_per_epoch_for(size_t n_items, int batch_size) {
  return std::max<long>(1, static_cast<long>((n_items + batch_size - 1) /
                                             static_cast<size_t>(batch_size)));
}

template <typename Real>
void append_metrics_line(std::FILE* f, long step, const LossBreakdown<Real>& bd, double lr) {
  std::fprintf(f, "%ld\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\n",
               step, static_cast<double>(bd.mel), static_cast<double>(bd.align),
               static_cast<double>(bd.dur), static_cast<double>(bd.ldp),
               static_cast<double>(bd.lde), static_cast<double>(bd.lin),
               static_cast<double>(bd.ctc), static_cast<double>(bd.sdp),
               static_cast<double>(bd.sde), static_cast<double>(bd.total), lr);
}

// Runs (or resumes) a training loop, writing metrics.tsv, valid.tsv and
// checkpoints under out_dir. Returns the final checkpoint path.
template <typename Real>
std::string run_training(model::Model<Real>& net, nn::ParamStore<Real>& ps,
                         const std::vector<TrainItem<Real>>& train_items,
                         const std::vector<TrainItem<Real>>& valid_items,
                         TrainerConfig<Real> tcfg, const RunConfig<Real>& rcfg,
                         const std::string& resume_path = "") {
  namespace fs = std::filesystem;
  require(!train_items.empty(), "run_training: no training items");
  fs::create_directories(rcfg.out_dir);
  tcfg.steps_per_epoch = steps_per_epoch_for(train_items.size(), tcfg.batch_size);
  if (rcfg.checkpoint_every > 0)
    require(rcfg.checkpoint_every % tcfg.opt.accumulation == 0,
            "run_training: checkpoint interval must align with gradient accumulation");

  Trainer<Real> trainer(net, ps, tcfg);
  long start_step = 0;
  if (!resume_path.empty()) {
    CheckpointMeta meta = checkpoint_load(resume_path, ps);
    require(meta.root_seed == tcfg.seed,
            "run_training: resume seed differs from checkpoint seed");
    trainer.restore(static_cast<long>(meta.step), static_cast<long>(meta.opt_step));
    start_step = static_cast<long>(meta.step);
  }

  const std::string metrics_path = rcfg.out_dir + "/metrics.tsv";
  const std::string valid_path = rcfg.out_dir + "/valid.tsv";
  std::FILE* metrics = std::fopen(metrics_path.c_str(), start_step > 0 ? "a" : "w");
  if (!metrics) throw IoError("cannot write " + metrics_path);
  std::FILE* valid_log = nullptr;
  if (rcfg.validate_every > 0) {
    valid_log = std::fopen(valid_path.c_str(), start_step > 0 ? "a" : "w");
    if (!valid_log) throw IoError("cannot write " + valid_path);
  }

  auto save = [&](long step_index, const std::string& name) {
    CheckpointMeta meta;
    meta.step = static_cast<uint64_t>(step_index);
    meta.epoch = static_cast<uint64_t>(step_index / tcfg.steps_per_epoch);
    meta.opt_step = static_cast<uint64_t>(trainer.optimizer().step_count());
    meta.root_seed = tcfg.seed;
    meta.config_text = rcfg.config_text;
    const std::string path = rcfg.out_dir + "/" + name;
    checkpoint_save(path, ps, meta);
    return path;
  };

  if (start_step == 0 && rcfg.steps == 0) {
    // Zero-step run: write the initial checkpoint only.
    std::string final_path = save(0, "final.dtck");
    std::fclose(metrics);
    if (valid_log) std::fclose(valid_log);
    return final_path;
  }

  for (long s = start_step; s < rcfg.steps; ++s) {
    auto batch = compose_batch(train_items, tcfg.seed, s, tcfg.batch_size,
                               tcfg.steps_per_epoch);
    LossBreakdown<Real> bd = trainer.train_step(batch);
    append_metrics_line(metrics, s + 1, bd, trainer.current_lr());
    if (rcfg.validate_every > 0 && (s + 1) % rcfg.validate_every == 0 && valid_log) {
      const double v = trainer.validate(valid_items);
      std::fprintf(valid_log, "%ld\t%.9g\n", s + 1, v);
    }
    if (rcfg.checkpoint_every > 0 && (s + 1) % rcfg.checkpoint_every == 0 &&
        (s + 1) < rcfg.steps) {
      char name[64];
      std::snprintf(name, sizeof(name), "ckpt_%06ld.dtck", s + 1);
      save(s + 1, name);
    }
  }
  std::fclose(metrics);
  if (valid_log) std::fclose(valid_log);
  return save(rcfg.steps, "final.dtck");
}

}  // namespace dtts::train
