#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "subseg/fusion.hpp"
#include "subseg/labels.hpp"
#include "subseg/tcn.hpp"

namespace subseg {

struct ModelConfig {
  std::size_t stages = 4;
  std::size_t layers = 10;
  std::size_t kernel_width = 3;
  std::size_t channels = 64;
  std::size_t classes = 8;
  std::size_t feature_dim = 64;
  ScheduleKind schedule = ScheduleKind::fibonacci;
  double dropout = 0.5;
  std::uint64_t seed = 1;
};

// The full segmentation network: attention fusion of the two input streams
// followed by the multi-stage temporal refinement stack.
class SegmentationModel {
 public:
  explicit SegmentationModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  const DilationSchedule& schedule() const { return schedule_; }
  FusionParams& fusion() { return fusion_; }
  MultiStageParams& stage_params() { return stages_; }

  // Per-stage probability matrices (T x classes), first to last. Dropout is
  // active only when training is true.
  std::vector<TensorPtr> forward(ComputeTape* tape, const FeatureSequence& rgb,
                                 const FeatureSequence& flow, bool training);

  // All learnable tensors in fixed declaration order (fusion first, then each
  // stage's projection, conv layers, head). Checkpoints serialize this order.
  std::vector<TensorPtr> parameters() const;

  void save(const std::string& path) const;
  static SegmentationModel load(const std::string& path);

 private:
  explicit SegmentationModel(const ModelConfig& cfg, bool defer_init);

  ModelConfig cfg_;
  DilationSchedule schedule_;
  FusionParams fusion_;
  MultiStageParams stages_;
  std::mt19937_64 dropout_rng_;
};

// Index of the most probable class per row.
LabelSequence argmax_rows(const TensorPtr& probs);

}  // namespace subseg
