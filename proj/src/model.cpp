#include "subseg/model.hpp"

#include <algorithm>

#include "subseg/binio.hpp"
#include "subseg/errors.hpp"

namespace subseg {

namespace {

constexpr char kMagic[] = "SSEGCKPT";  // 8 bytes, no terminator on disk
constexpr std::uint32_t kVersion = 1;

void check_config(const ModelConfig& cfg) {
  if (cfg.stages < 1 || cfg.layers < 1 || cfg.channels < 1 || cfg.classes < 2 ||
      cfg.feature_dim < 1)
    throw parameter_error("model config: stage/layer/channel/class/feature counts must be positive"
                          " (and at least two classes)");
  if (cfg.kernel_width % 2 == 0 || cfg.kernel_width < 1)
    throw parameter_error("model config: kernel width must be odd");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0)
    throw parameter_error("model config: dropout must lie in [0, 1)");
}

}  // namespace

SegmentationModel::SegmentationModel(const ModelConfig& cfg, bool defer_init)
    : cfg_(cfg),
      schedule_(make_schedule(cfg.schedule, cfg.layers)),
      dropout_rng_(cfg.seed ^ 0x9e3779b97f4a7c15ull) {
  check_config(cfg_);
  if (defer_init) return;
  std::mt19937_64 rng(cfg.seed);
  fusion_ = FusionParams::init(cfg.feature_dim, rng);
  stages_ = MultiStageParams::init(cfg.stages, cfg.feature_dim, cfg.channels, cfg.classes,
                                   cfg.layers, cfg.kernel_width, rng);
}

SegmentationModel::SegmentationModel(const ModelConfig& cfg) : SegmentationModel(cfg, false) {}

std::vector<TensorPtr> SegmentationModel::forward(ComputeTape* tape, const FeatureSequence& rgb,
                                                  const FeatureSequence& flow, bool training) {
  FeatureSequence fused = fuse(tape, fusion_, rgb, flow);
  return multistage_forward(tape, stages_, schedule_, fused.data, cfg_.kernel_width, cfg_.dropout,
                            dropout_rng_, training);
}

std::vector<TensorPtr> SegmentationModel::parameters() const {
  std::vector<TensorPtr> out{fusion_.w, fusion_.b};
  for (const StageParams& st : stages_.stages) {
    out.push_back(st.proj_w);
    out.push_back(st.proj_b);
    for (std::size_t l = 0; l < st.conv_k.size(); ++l) {
      out.push_back(st.conv_k[l]);
      out.push_back(st.conv_b[l]);
    }
    out.push_back(st.head_w);
    out.push_back(st.head_b);
  }
  return out;
}

void SegmentationModel::save(const std::string& path) const {
  ByteWriter w(path);
  w.bytes(kMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(cfg_.stages));
  w.u32(static_cast<std::uint32_t>(cfg_.layers));
  w.u32(static_cast<std::uint32_t>(cfg_.kernel_width));
  w.u32(static_cast<std::uint32_t>(cfg_.channels));
  w.u32(static_cast<std::uint32_t>(cfg_.classes));
  w.u32(static_cast<std::uint32_t>(cfg_.feature_dim));
  w.u32(cfg_.schedule == ScheduleKind::fibonacci ? 0u : 1u);
  for (const TensorPtr& p : parameters())
    for (double v : p->values) w.f64(v);
  w.close();
}

SegmentationModel SegmentationModel::load(const std::string& path) {
  ByteReader r(path);
  const std::string magic = r.bytes(8, "magic");
  if (magic != kMagic) throw format_error("'" + path + "': not a model checkpoint", 0);
  const std::uint32_t version = r.u32("format version");
  if (version != kVersion)
    throw format_error("'" + path + "': unsupported checkpoint version " + std::to_string(version),
                       8);

  ModelConfig cfg;
  cfg.stages = r.u32("stage count");
  cfg.layers = r.u32("layer count");
  cfg.kernel_width = r.u32("kernel width");
  cfg.channels = r.u32("channel count");
  cfg.classes = r.u32("class count");
  cfg.feature_dim = r.u32("feature dimension");
  const std::uint32_t sched = r.u32("schedule kind");
  if (sched > 1)
    throw format_error("'" + path + "': unknown schedule kind " + std::to_string(sched),
                       r.offset() - 4);
  cfg.schedule = sched == 0 ? ScheduleKind::fibonacci : ScheduleKind::exponential;

  SegmentationModel model(cfg, true);
  std::mt19937_64 throwaway(0);
  model.fusion_ = FusionParams::init(cfg.feature_dim, throwaway);
  model.stages_ = MultiStageParams::init(cfg.stages, cfg.feature_dim, cfg.channels, cfg.classes,
                                         cfg.layers, cfg.kernel_width, throwaway);
  for (const TensorPtr& p : model.parameters())
    for (double& v : p->values) v = r.f64("parameter block");
  if (!r.at_end())
    throw format_error("'" + path + "': trailing bytes after parameter blocks", r.offset());
  return model;
}

LabelSequence argmax_rows(const TensorPtr& probs) {
  if (!probs || probs->rank() != 2) throw dimension_error("argmax_rows: expected a 2-d tensor");
  const std::size_t t_len = probs->rows();
  const std::size_t c = probs->cols();
  LabelSequence out(t_len, 0);
  for (std::size_t t = 0; t < t_len; ++t) {
    const double* row = probs->values.data() + t * c;
    out[t] = static_cast<std::size_t>(std::max_element(row, row + c) - row);
  }
  return out;
}

}  // namespace subseg
