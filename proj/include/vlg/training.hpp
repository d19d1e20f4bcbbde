// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "vlg/evaluation.hpp"
#include "vlg/loss.hpp"
#include "vlg/model.hpp"
#include "vlg/snare.hpp"

// Pairwise reference-game training: smoothed BCE over per-candidate scores,
// AdamW with linear warmup (constant rate afterwards), epoch loop with
// best-validation checkpoint selection.

namespace vlg {

struct TrainConfig {
  double base_lr = 1e-3;
  long warmup_steps = 10000;
  int epochs = 75;
  int batch_size = 32;
  double smoothing = 0.2;       // label smoothing epsilon, in [0, 0.5)
  double weight_decay = 1e-2;   // decoupled
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::smoothed_bce;
  double grad_clip = 0.0;  // global-norm clip; 0 disables
  int threads = 1;         // per-step instance fan-out

  void validate() const;
  LossConfig loss_config() const { return {loss, smoothing}; }
  std::string to_text() const;  // key=value snapshot, train.* prefix
};

// base_lr * min(1, step / warmup_steps); constant base_lr after warmup.
double lr_at(long step, const TrainConfig& cfg);

struct AdamState {
  ParameterSet m, v;
  std::uint64_t step = 0;  // completed optimizer steps
};

AdamState init_adam_state(const ParameterSet& params);

// One decoupled-weight-decay update with bias correction; increments
// state.step and uses lr_at(state.step). Refuses non-finite gradients.
void adamw_step(ParameterSet& params, const ParameterSet& grads,
                AdamState& state, const TrainConfig& cfg);

struct EpochRecord {
  double train_loss = 0.0;
  CategoryAccuracy val_accuracy;
};

struct RunRecord {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;  // 0-based; maximizes validation "all" accuracy
  std::string checkpoint_path;
  std::uint64_t seed = 0;
  std::uint64_t total_steps = 0;
  std::string model_config_text;  // resolved snapshot
  std::string train_config_text;
};

// Runs the full loop over the train split of `instances`, evaluating the
// valid split each epoch and persisting the best checkpoint under out_dir.
// Fully deterministic in (configs, instances, archive).
RunRecord train(const TrainConfig& train_cfg, const ModelConfig& model_cfg,
                const std::vector<ReferenceInstance>& instances,
                const FeatureArchive& archive, const std::string& out_dir,
                std::ostream* progress = nullptr);

std::string model_config_text(const ModelConfig& cfg);  // model.* snapshot

void save_run_record(const RunRecord& record, const std::string& path);
RunRecord load_run_record(const std::string& path);

}  // namespace vlg
