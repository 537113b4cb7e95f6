#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "subseg/data.hpp"
#include "subseg/loss.hpp"
#include "subseg/model.hpp"

namespace subseg {

struct TrainConfig {
  double eta0 = 5e-4;            // initial learning rate
  std::size_t warmup_epochs = 5;
  std::size_t max_epochs = 50;
  std::size_t batch_videos = 8;  // whole videos per optimizer step
  double clip_norm = 5.0;
  double weight_decay = 1e-4;
  std::size_t patience = 5;      // early stop on validation loss
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 1;
  // Post-processing applied before the selection metric (F1@50).
  std::size_t median_window = 3;
  std::size_t min_run = 5;
};

// Linear warmup to eta0 over warmup_epochs, then cosine decay to 0 at
// max_epochs; continuous at the warmup boundary.
double lr_at(std::size_t epoch, const TrainConfig& cfg);

struct OptimizerState {
  std::vector<std::vector<double>> m;  // first moments, one block per parameter
  std::vector<std::vector<double>> v;  // second moments
  std::size_t step = 0;

  static OptimizerState init(const std::vector<TensorPtr>& params);
};

// One AdamW update from the gradients currently stored on the parameters.
// Weight decay is decoupled and applied before the moment-based update.
void adamw_step(const std::vector<TensorPtr>& params, OptimizerState& state, double lr,
                const TrainConfig& cfg);

// Scales all gradients so their joint L2 norm is at most g_max; returns the
// pre-clipping norm.
double clip_global_norm(const std::vector<TensorPtr>& params, double g_max);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double val_f1_50 = 0.0;
  double val_edit = 0.0;
};

struct FitResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;   // epoch with the highest validation F1@50
  double best_f1_50 = 0.0;
  std::size_t epochs_run = 0;
};

// Full optimization loop. Leaves the model holding the parameters of the
// best-F1@50 epoch and writes config.txt, metrics.log, best.ckpt and
// final.ckpt into run_dir (created if missing; pass "" to skip artifacts).
FitResult fit(SegmentationModel& model, Dataset& data, const LossConfig& loss_cfg,
              const TransitionMatrix& transitions, const TrainConfig& cfg,
              const std::string& run_dir);

}  // namespace subseg
