#include "subseg/tcn.hpp"

#include <cmath>

#include "subseg/errors.hpp"

namespace subseg {

DilationSchedule make_schedule(ScheduleKind kind, std::size_t layers) {
  if (layers < 1) throw parameter_error("dilation schedule needs at least one layer");
  DilationSchedule s;
  s.kind = kind;
  s.dilations.reserve(layers);
  if (kind == ScheduleKind::exponential) {
    std::size_t d = 1;
    for (std::size_t l = 0; l < layers; ++l, d *= 2) s.dilations.push_back(d);
  } else {
    // 1, 2, 3, 5, 8, ... : consecutive-sum recurrence seeded with 1, 2.
    std::size_t prev = 1, cur = 2;
    for (std::size_t l = 0; l < layers; ++l) {
      s.dilations.push_back(l == 0 ? prev : cur);
      if (l >= 1) {
        const std::size_t next = prev + cur;
        prev = cur;
        cur = next;
      }
    }
  }
  return s;
}

std::size_t receptive_field(const DilationSchedule& schedule, std::size_t kernel_width) {
  if (kernel_width < 1 || kernel_width % 2 == 0)
    throw parameter_error("receptive_field: kernel width must be odd and positive");
  std::size_t total = 0;
  for (std::size_t d : schedule.dilations) total += d;
  return 1 + (kernel_width - 1) * total;
}

namespace {

TensorPtr uniform_matrix(std::vector<std::size_t> dims, std::size_t fan_in,
                         std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> unif(-bound, bound);
  auto t = Tensor::zeros(std::move(dims), true);
  for (double& v : t->values) v = unif(rng);
  return t;
}

}  // namespace

StageParams StageParams::init(std::size_t in_dim, std::size_t channels, std::size_t classes,
                              std::size_t layers, std::size_t kernel_width, std::mt19937_64& rng) {
  if (in_dim == 0 || channels == 0 || classes == 0)
    throw parameter_error("stage init: dimensions must be positive");
  StageParams p;
  p.proj_w = uniform_matrix({channels, in_dim}, in_dim, rng);
  p.proj_b = Tensor::zeros({channels}, true);
  p.conv_k.reserve(layers);
  p.conv_b.reserve(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    p.conv_k.push_back(uniform_matrix({channels, channels, kernel_width},
                                      channels * kernel_width, rng));
    p.conv_b.push_back(Tensor::zeros({channels}, true));
  }
  p.head_w = uniform_matrix({classes, channels}, channels, rng);
  p.head_b = Tensor::zeros({classes}, true);
  return p;
}

MultiStageParams MultiStageParams::init(std::size_t num_stages, std::size_t feature_dim,
                                        std::size_t channels, std::size_t classes,
                                        std::size_t layers, std::size_t kernel_width,
                                        std::mt19937_64& rng) {
  if (num_stages < 1) throw parameter_error("model needs at least one stage");
  MultiStageParams p;
  p.stages.reserve(num_stages);
  for (std::size_t s = 0; s < num_stages; ++s) {
    const std::size_t in_dim = s == 0 ? feature_dim : classes;
    p.stages.push_back(StageParams::init(in_dim, channels, classes, layers, kernel_width, rng));
  }
  return p;
}

TensorPtr stage_forward(ComputeTape* tape, const StageParams& params,
                        const DilationSchedule& schedule, const TensorPtr& input,
                        std::size_t kernel_width, double dropout_p, std::mt19937_64& dropout_rng,
                        bool training) {
  if (params.conv_k.size() != schedule.layers())
    throw config_error("stage_forward: schedule layer count does not match the parameters");
  for (const TensorPtr& k : params.conv_k)
    if (k->shape[2] != kernel_width)
      throw config_error("stage_forward: kernel width does not match the parameters");

  auto h = ops::linear(tape, input, params.proj_w, params.proj_b);
  for (std::size_t l = 0; l < schedule.layers(); ++l) {
    auto conv =
        ops::conv1d_dilated(tape, h, params.conv_k[l], params.conv_b[l], schedule.dilations[l]);
    auto act = ops::relu(tape, conv);
    auto dropped = ops::dropout(tape, act, dropout_p, dropout_rng, training);
    h = ops::add(tape, dropped, h);
  }
  return ops::linear(tape, h, params.head_w, params.head_b);
}

std::vector<TensorPtr> multistage_forward(ComputeTape* tape, const MultiStageParams& params,
                                          const DilationSchedule& schedule,
                                          const TensorPtr& features, std::size_t kernel_width,
                                          double dropout_p, std::mt19937_64& dropout_rng,
                                          bool training) {
  if (params.stages.empty()) throw config_error("multistage_forward: no stages configured");
  std::vector<TensorPtr> probs;
  probs.reserve(params.stages.size());
  TensorPtr cur = features;
  for (const StageParams& stage : params.stages) {
    auto logits = stage_forward(tape, stage, schedule, cur, kernel_width, dropout_p, dropout_rng,
                                training);
    cur = ops::softmax_rows(tape, logits);
    probs.push_back(cur);
  }
  return probs;
}

}  // namespace subseg
