#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "subseg/ops.hpp"
#include "subseg/tensor.hpp"

namespace subseg {

enum class ScheduleKind { fibonacci, exponential };

struct DilationSchedule {
  ScheduleKind kind = ScheduleKind::fibonacci;
  std::vector<std::size_t> dilations;  // one entry per residual layer

  std::size_t layers() const { return dilations.size(); }
};

// Fibonacci schedule starts 1, 2, 3, 5, ...; exponential starts 1, 2, 4, 8, ...
DilationSchedule make_schedule(ScheduleKind kind, std::size_t layers);

// Frames covered by a stack of width-k dilated convolutions:
// 1 + (k - 1) * sum(dilations).
std::size_t receptive_field(const DilationSchedule& schedule, std::size_t kernel_width);

// One refinement stage: a 1x1 input projection, a chain of dilated residual
// blocks, and a per-frame classification head.
struct StageParams {
  TensorPtr proj_w;  // C x Din
  TensorPtr proj_b;  // C
  std::vector<TensorPtr> conv_k;  // per layer: C x C x k
  std::vector<TensorPtr> conv_b;  // per layer: C
  TensorPtr head_w;  // classes x C
  TensorPtr head_b;  // classes

  static StageParams init(std::size_t in_dim, std::size_t channels, std::size_t classes,
                          std::size_t layers, std::size_t kernel_width, std::mt19937_64& rng);
};

struct MultiStageParams {
  std::vector<StageParams> stages;

  // First stage reads raw features (in_dim = feature_dim); later stages read
  // the previous stage's class probabilities (in_dim = classes).
  static MultiStageParams init(std::size_t num_stages, std::size_t feature_dim,
                               std::size_t channels, std::size_t classes, std::size_t layers,
                               std::size_t kernel_width, std::mt19937_64& rng);
};

// Frame-wise logits of one stage. `dropout_rng` is only consulted when
// training is true.
TensorPtr stage_forward(ComputeTape* tape, const StageParams& params,
                        const DilationSchedule& schedule, const TensorPtr& input,
                        std::size_t kernel_width, double dropout_p, std::mt19937_64& dropout_rng,
                        bool training);

// Per-stage probability matrices (softmax over classes), first to last.
// Stage s >= 2 consumes the probabilities of stage s - 1.
std::vector<TensorPtr> multistage_forward(ComputeTape* tape, const MultiStageParams& params,
                                          const DilationSchedule& schedule,
                                          const TensorPtr& features, std::size_t kernel_width,
                                          double dropout_p, std::mt19937_64& dropout_rng,
                                          bool training);

}  // namespace subseg
