#include "subseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "subseg/errors.hpp"
#include "subseg/metrics.hpp"
#include "subseg/postprocess.hpp"
#include "subseg/tape.hpp"

namespace subseg {

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  if (cfg.warmup_epochs > cfg.max_epochs)
    throw parameter_error("lr schedule: warmup cannot exceed the epoch budget");
  if (epoch >= cfg.max_epochs) throw parameter_error("lr schedule: epoch beyond budget");
  if (epoch < cfg.warmup_epochs)
    return cfg.eta0 * static_cast<double>(epoch + 1) / static_cast<double>(cfg.warmup_epochs);
  if (cfg.max_epochs == cfg.warmup_epochs) return cfg.eta0;
  const double progress = static_cast<double>(epoch - cfg.warmup_epochs) /
                          static_cast<double>(cfg.max_epochs - cfg.warmup_epochs);
  return cfg.eta0 * 0.5 * (1.0 + std::cos(progress * 3.14159265358979323846));
}

OptimizerState OptimizerState::init(const std::vector<TensorPtr>& params) {
  OptimizerState s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const TensorPtr& p : params) {
    s.m.emplace_back(p->numel(), 0.0);
    s.v.emplace_back(p->numel(), 0.0);
  }
  return s;
}

void adamw_step(const std::vector<TensorPtr>& params, OptimizerState& state, double lr,
                const TrainConfig& cfg) {
  if (state.m.size() != params.size())
    throw dimension_error("adamw: optimizer state does not match parameter list");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    std::vector<double>& m = state.m[pi];
    std::vector<double>& v = state.v[pi];
    if (m.size() != p.numel())
      throw dimension_error("adamw: moment buffer shape does not match parameter");
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double g = p.grad[i];
      if (!std::isfinite(g))
        throw numeric_error("adamw: non-finite gradient in parameter block " +
                            std::to_string(pi));
      p.values[i] -= lr * cfg.weight_decay * p.values[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      p.values[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
    }
  }
}

double clip_global_norm(const std::vector<TensorPtr>& params, double g_max) {
  if (g_max <= 0.0) throw parameter_error("clip: the norm bound must be positive");
  double sq = 0.0;
  for (const TensorPtr& p : params)
    for (double g : p->grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > g_max) {
    const double factor = g_max / norm;
    for (const TensorPtr& p : params)
      for (double& g : p->grad) g *= factor;
  }
  return norm;
}

namespace {

std::vector<std::vector<double>> snapshot(const std::vector<TensorPtr>& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const TensorPtr& p : params) out.push_back(p->values);
  return out;
}

void restore(const std::vector<TensorPtr>& params, const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->values = snap[i];
}

void write_config_snapshot(const std::string& path, const SegmentationModel& model,
                           const LossConfig& loss_cfg, const TrainConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw format_error("cannot open config snapshot '" + path + "' for writing", 0);
  const ModelConfig& mc = model.config();
  out << "stages=" << mc.stages << "\nlayers=" << mc.layers
      << "\nkernel_width=" << mc.kernel_width << "\nchannels=" << mc.channels
      << "\nclasses=" << mc.classes << "\nfeature_dim=" << mc.feature_dim << "\nschedule="
      << (mc.schedule == ScheduleKind::fibonacci ? "fibonacci" : "exponential")
      << "\ndropout=" << mc.dropout << "\nmodel_seed=" << mc.seed << "\nlambda=" << loss_cfg.lambda
      << "\ngamma=" << loss_cfg.gamma << "\ntau=" << loss_cfg.tau << "\neta0=" << cfg.eta0
      << "\nwarmup_epochs=" << cfg.warmup_epochs << "\nmax_epochs=" << cfg.max_epochs
      << "\nbatch_videos=" << cfg.batch_videos << "\nclip_norm=" << cfg.clip_norm
      << "\nweight_decay=" << cfg.weight_decay << "\npatience=" << cfg.patience
      << "\nseed=" << cfg.seed << "\nmedian_window=" << cfg.median_window
      << "\nmin_run=" << cfg.min_run << "\n";
}

struct ValScores {
  double loss = 0.0;
  MetricReport report;
};

ValScores validate(SegmentationModel& model, const std::vector<VideoSample>& val,
                   const LossConfig& loss_cfg, const TransitionMatrix& transitions,
                   const TrainConfig& cfg) {
  ValScores out;
  std::vector<LabelSequence> preds, gts;
  for (const VideoSample& video : val) {
    auto probs = model.forward(nullptr, video.rgb, video.flow, false);
    out.loss += composite_loss(nullptr, probs, video.labels, loss_cfg, transitions)->values[0];
    LabelSequence pred = argmax_rows(probs.back());
    pred = median_filter(pred, cfg.median_window);
    pred = collapse_short_runs(pred, cfg.min_run);
    preds.push_back(std::move(pred));
    gts.push_back(video.labels);
  }
  out.loss /= static_cast<double>(val.size());
  out.report = evaluate_many(preds, gts);
  return out;
}

}  // namespace

FitResult fit(SegmentationModel& model, Dataset& data, const LossConfig& loss_cfg,
              const TransitionMatrix& transitions, const TrainConfig& cfg,
              const std::string& run_dir) {
  if (data.train.empty() || data.val.empty())
    throw usage_error("fit: training and validation splits must both be nonempty");
  if (cfg.batch_videos < 1) throw parameter_error("fit: batch size must be at least one video");

  std::ofstream log;
  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir);
    write_config_snapshot(run_dir + "/config.txt", model, loss_cfg, cfg);
    log.open(run_dir + "/metrics.log");
    if (!log) throw format_error("cannot open '" + run_dir + "/metrics.log' for writing", 0);
    log.precision(10);
  }

  const std::vector<TensorPtr> params = model.parameters();
  OptimizerState opt = OptimizerState::init(params);
  std::mt19937_64 shuffle_rng(cfg.seed);

  FitResult result;
  std::vector<std::vector<double>> best_params = snapshot(params);
  double best_val_loss = std::numeric_limits<double>::infinity();
  double best_val_acc = -1.0;
  std::size_t since_improvement = 0;

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    for (std::size_t batch_start = 0; batch_start < order.size();
         batch_start += cfg.batch_videos) {
      const std::size_t batch_end = std::min(batch_start + cfg.batch_videos, order.size());
      const std::size_t batch_size = batch_end - batch_start;
      for (const TensorPtr& p : params) p->zero_grad();

      for (std::size_t i = batch_start; i < batch_end; ++i) {
        const VideoSample& video = data.train[order[i]];
        ComputeTape tape;
        auto probs = model.forward(&tape, video.rgb, video.flow, true);
        auto loss = composite_loss(&tape, probs, video.labels, loss_cfg, transitions);
        const double loss_value = loss->values[0];
        if (!std::isfinite(loss_value))
          throw numeric_error("fit: loss diverged at epoch " + std::to_string(epoch) +
                              ", batch " + std::to_string(batch_start / cfg.batch_videos));
        epoch_loss += loss_value;
        tape.backward(loss);
      }

      // Average the accumulated per-video gradients, then clip and step.
      const double inv = 1.0 / static_cast<double>(batch_size);
      for (const TensorPtr& p : params)
        for (double& g : p->grad) g *= inv;
      clip_global_norm(params, cfg.clip_norm);
      adamw_step(params, opt, lr, cfg);
    }
    epoch_loss /= static_cast<double>(order.size());

    const ValScores val = validate(model, data.val, loss_cfg, transitions, cfg);
    if (!std::isfinite(val.loss))
      throw numeric_error("fit: validation loss diverged at epoch " + std::to_string(epoch));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = epoch_loss;
    rec.val_loss = val.loss;
    rec.val_acc = val.report.acc;
    rec.val_f1_50 = val.report.f1.at(50);
    rec.val_edit = val.report.edit;
    result.history.push_back(rec);
    result.epochs_run = epoch + 1;

    // Select on F1@50; among equal-F1 epochs keep the one with the higher
    // frame accuracy, since F1 saturates well before the boundaries settle.
    const bool best_metric =
        result.history.size() == 1 || rec.val_f1_50 > result.best_f1_50 ||
        (rec.val_f1_50 == result.best_f1_50 && rec.val_acc > best_val_acc);
    if (best_metric) {
      result.best_f1_50 = rec.val_f1_50;
      best_val_acc = rec.val_acc;
      result.best_epoch = epoch;
      best_params = snapshot(params);
    }

    if (log)
      log << "epoch=" << epoch << " lr=" << lr << " train_loss=" << epoch_loss
          << " val_loss=" << val.loss << " val_acc=" << rec.val_acc
          << " val_f1_50=" << rec.val_f1_50 << " val_edit=" << rec.val_edit
          << " best=" << (best_metric ? 1 : 0) << "\n"
          << std::flush;

    if (val.loss < best_val_loss - 1e-12) {
      best_val_loss = val.loss;
      since_improvement = 0;
    } else if (++since_improvement >= cfg.patience) {
      break;
    }
  }

  if (!run_dir.empty()) model.save(run_dir + "/final.ckpt");
  restore(params, best_params);
  if (!run_dir.empty()) model.save(run_dir + "/best.ckpt");
  return result;
}

}  // namespace subseg
