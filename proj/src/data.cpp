#include "subseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "subseg/binio.hpp"
#include "subseg/errors.hpp"

namespace subseg {

namespace fs = std::filesystem;

ClassVocabulary::ClassVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw parameter_error("vocabulary: needs at least one class");
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].empty()) throw parameter_error("vocabulary: class names must be nonempty");
    if (!ids_.emplace(names_[i], i).second)
      throw parameter_error("vocabulary: duplicate class name '" + names_[i] + "'");
  }
}

ClassVocabulary ClassVocabulary::default_subtasks() {
  return ClassVocabulary(
      {"reach", "pick", "move", "pour", "give", "place", "wipe", "retract"});
}

const std::string& ClassVocabulary::name(std::size_t id) const {
  if (id >= names_.size())
    throw lookup_error("vocabulary: class id " + std::to_string(id) + " out of range");
  return names_[id];
}

std::size_t ClassVocabulary::id(const std::string& name) const {
  auto it = ids_.find(name);
  if (it == ids_.end()) throw lookup_error("vocabulary: unknown class '" + name + "'");
  return it->second;
}

ClassVocabulary ClassVocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw format_error("cannot open mapping file '" + path + "'", 0);
  std::vector<std::string> names;
  std::string line;
  std::size_t offset = 0;
  std::size_t expected_id = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) {
      std::istringstream fields(line);
      std::size_t id;
      std::string name;
      if (!(fields >> id >> name))
        throw format_error("'" + path + "': expected 'id name' line", offset);
      if (id != expected_id)
        throw format_error("'" + path + "': ids must be dense from 0 (got " + std::to_string(id) +
                               ", expected " + std::to_string(expected_id) + ")",
                           offset);
      if (std::find(names.begin(), names.end(), name) != names.end())
        throw format_error("'" + path + "': duplicate class name '" + name + "'", offset);
      names.push_back(name);
      ++expected_id;
    }
    offset += line.size() + 1;
  }
  if (names.empty()) throw format_error("'" + path + "': no classes defined", 0);
  return ClassVocabulary(std::move(names));
}

void ClassVocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw format_error("cannot open mapping file '" + path + "' for writing", 0);
  for (std::size_t i = 0; i < names_.size(); ++i) out << i << ' ' << names_[i] << "\n";
  if (!out) throw format_error("failed writing mapping file '" + path + "'", 0);
}

TaskGrammar::TaskGrammar(std::vector<std::pair<std::string, std::vector<std::string>>> tasks)
    : tasks_(std::move(tasks)) {
  std::set<std::string> seen;
  for (const auto& [task, seq] : tasks_) {
    if (seq.empty()) throw parameter_error("grammar: task '" + task + "' has an empty sequence");
    if (!seen.insert(task).second)
      throw parameter_error("grammar: duplicate task '" + task + "'");
  }
}

TaskGrammar TaskGrammar::default_tasks() {
  return TaskGrammar({
      {"pick_place", {"reach", "pick", "move", "place", "retract"}},
      {"pick_pour", {"reach", "pick", "move", "pour", "move", "place", "retract"}},
      {"cleaning", {"reach", "wipe", "retract"}},
      {"pick_give", {"reach", "pick", "give", "retract"}},
  });
}

const std::vector<std::string>& TaskGrammar::sequence(const std::string& task) const {
  for (const auto& [name, seq] : tasks_)
    if (name == task) return seq;
  throw lookup_error("grammar: unknown task '" + task + "'");
}

std::vector<std::string> TaskGrammar::task_names() const {
  std::vector<std::string> out;
  for (const auto& [name, seq] : tasks_) out.push_back(name);
  return out;
}

void TaskGrammar::validate(const ClassVocabulary& vocab) const {
  for (const auto& [task, seq] : tasks_)
    for (const std::string& sub : seq)
      if (!vocab.contains(sub))
        throw config_error("grammar: task '" + task + "' uses unknown sub-task '" + sub + "'");
}

SplitCounts split_counts(const SplitSpec& spec, std::size_t num_tasks) {
  if (spec.r_val < 0.0 || spec.r_val >= 1.0)
    throw config_error("split: holdout fraction must lie in [0, 1)");
  if (spec.videos_per_task == 0) throw config_error("split: videos per task must be positive");

  const double n = static_cast<double>(spec.videos_per_task);
  const double val_exact = spec.r_val * n;
  const double val_rounded = std::round(val_exact);
  if (std::abs(val_exact - val_rounded) > 1e-9)
    throw config_error("split: holdout fraction does not divide the video count evenly");

  SplitCounts c;
  c.val_per_task = static_cast<std::size_t>(val_rounded);
  c.train_aug_per_task =
      (spec.videos_per_task - c.val_per_task) * (1 + spec.augmentations);
  c.total_train = c.train_aug_per_task * num_tasks;
  return c;
}

namespace {

// Stable per-video seed derivation from the root seed (splitmix64 steps).
std::uint64_t mix_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t z = root;
  for (std::uint64_t salt : {a + 1, b + 1, c + 1}) {
    z += 0x9e3779b97f4a7c15ull * salt;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
  }
  return z;
}

bool flow_dominant(const std::string& cls) {
  return cls == "reach" || cls == "retract" || cls == "wipe" || cls == "move";
}

// Per-class unit prototypes, derived from the root seed only so every video
// shares them. Order: per class, rgb prototype then flow prototype.
std::vector<std::vector<double>> class_prototypes(const ClassVocabulary& vocab,
                                                  const SyntheticGenConfig& cfg) {
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x70726f746f, 0, 0));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> protos(2 * vocab.size());
  for (auto& p : protos) {
    p.resize(cfg.feature_dim);
    for (double& v : p) v = normal(rng);
  }
  return protos;
}

}  // namespace

Demo generate_demo(const std::string& task, const TaskGrammar& grammar,
                   const ClassVocabulary& vocab, const SyntheticGenConfig& cfg,
                   std::uint64_t video_seed) {
  if (cfg.min_duration < 1 || cfg.max_duration < cfg.min_duration)
    throw parameter_error("generator: duration range must satisfy 1 <= min <= max");
  if (cfg.noise < 0.0) throw parameter_error("generator: noise scale must be nonnegative");
  const std::vector<std::string>& seq = grammar.sequence(task);

  std::mt19937_64 rng(video_seed);
  std::uniform_int_distribution<std::size_t> dur(cfg.min_duration, cfg.max_duration);
  std::normal_distribution<double> normal(0.0, 1.0);

  LabelSequence labels;
  for (const std::string& sub : seq) {
    const std::size_t cls = vocab.id(sub);
    labels.insert(labels.end(), dur(rng), cls);
  }

  const auto protos = class_prototypes(vocab, cfg);
  const std::size_t t_len = labels.size();
  auto rgb = Tensor::zeros({t_len, cfg.feature_dim});
  auto flow = Tensor::zeros({t_len, cfg.feature_dim});
  for (std::size_t t = 0; t < t_len; ++t) {
    const std::size_t cls = labels[t];
    const bool flow_is_dominant = flow_dominant(vocab.name(cls));
    const std::vector<double>& proto = protos[2 * cls + (flow_is_dominant ? 1 : 0)];
    double* dominant = (flow_is_dominant ? flow : rgb)->values.data() + t * cfg.feature_dim;
    double* other = (flow_is_dominant ? rgb : flow)->values.data() + t * cfg.feature_dim;
    for (std::size_t d = 0; d < cfg.feature_dim; ++d) {
      dominant[d] = proto[d] + cfg.noise * normal(rng);
      other[d] = cfg.noise * normal(rng);
    }
  }

  Demo demo;
  demo.rgb = FeatureSequence{Modality::rgb, rgb};
  demo.flow = FeatureSequence{Modality::flow, flow};
  demo.labels = std::move(labels);
  return demo;
}

void Normalizer::apply(const TensorPtr& rgb, const TensorPtr& flow) const {
  const std::size_t d = mean.size() / 2;
  if (!rgb || !flow || rgb->cols() != d || flow->cols() != d)
    throw dimension_error("normalizer: stream width does not match fitted statistics");
  for (std::size_t t = 0; t < rgb->rows(); ++t)
    for (std::size_t c = 0; c < d; ++c)
      rgb->values[t * d + c] = (rgb->values[t * d + c] - mean[c]) / stdev[c];
  for (std::size_t t = 0; t < flow->rows(); ++t)
    for (std::size_t c = 0; c < d; ++c)
      flow->values[t * d + c] = (flow->values[t * d + c] - mean[d + c]) / stdev[d + c];
}

Normalizer fit_normalizer(const std::vector<VideoSample>& train) {
  if (train.empty()) throw usage_error("normalizer: no training sequences to fit on");
  const std::size_t d = train.front().rgb.D();
  Normalizer n;
  n.mean.assign(2 * d, 0.0);
  n.stdev.assign(2 * d, 0.0);

  std::size_t frames = 0;
  for (const VideoSample& v : train) {
    if (v.rgb.D() != d || v.flow.D() != d)
      throw dimension_error("normalizer: inconsistent stream widths across training videos");
    frames += v.rgb.T();
    for (std::size_t t = 0; t < v.rgb.T(); ++t)
      for (std::size_t c = 0; c < d; ++c) {
        n.mean[c] += v.rgb.data->values[t * d + c];
        n.mean[d + c] += v.flow.data->values[t * d + c];
      }
  }
  for (double& m : n.mean) m /= static_cast<double>(frames);

  for (const VideoSample& v : train)
    for (std::size_t t = 0; t < v.rgb.T(); ++t)
      for (std::size_t c = 0; c < d; ++c) {
        const double dr = v.rgb.data->values[t * d + c] - n.mean[c];
        const double df = v.flow.data->values[t * d + c] - n.mean[d + c];
        n.stdev[c] += dr * dr;
        n.stdev[d + c] += df * df;
      }
  for (double& s : n.stdev) s = std::max(std::sqrt(s / static_cast<double>(frames)), 1e-8);
  return n;
}

void apply_normalizer(const Normalizer& n, Dataset& data) {
  for (VideoSample& v : data.train) n.apply(v.rgb.data, v.flow.data);
  for (VideoSample& v : data.val) n.apply(v.rgb.data, v.flow.data);
}

Normalizer Normalizer::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw format_error("cannot open normalizer file '" + path + "'", 0);
  std::size_t width = 0;
  if (!(in >> width) || width == 0)
    throw format_error("'" + path + "': expected positive channel count", 0);
  Normalizer n;
  n.mean.resize(width);
  n.stdev.resize(width);
  for (double& v : n.mean)
    if (!(in >> v)) throw format_error("'" + path + "': truncated mean row", 0);
  for (double& v : n.stdev)
    if (!(in >> v)) throw format_error("'" + path + "': truncated std row", 0);
  return n;
}

void Normalizer::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw format_error("cannot open normalizer file '" + path + "' for writing", 0);
  out.precision(17);
  out << mean.size() << "\n";
  for (std::size_t i = 0; i < mean.size(); ++i) out << (i ? " " : "") << mean[i];
  out << "\n";
  for (std::size_t i = 0; i < stdev.size(); ++i) out << (i ? " " : "") << stdev[i];
  out << "\n";
  if (!out) throw format_error("failed writing normalizer file '" + path + "'", 0);
}

void write_feature_file(const std::string& path, const Tensor& features) {
  if (features.rank() != 2) throw dimension_error("feature file: expected a T x D matrix");
  ByteWriter w(path);
  w.bytes("SSEQ1");
  w.u32(static_cast<std::uint32_t>(features.rows()));
  w.u32(static_cast<std::uint32_t>(features.cols()));
  for (double v : features.values) w.f32(static_cast<float>(v));
  w.close();
}

TensorPtr read_feature_file(const std::string& path) {
  ByteReader r(path);
  if (r.bytes(5, "magic") != "SSEQ1")
    throw format_error("'" + path + "': not a feature file (bad magic)", 0);
  const std::uint32_t t_len = r.u32("frame count");
  const std::uint32_t d = r.u32("channel count");
  if (t_len == 0 || d == 0)
    throw format_error("'" + path + "': frame and channel counts must be positive", 5);
  auto out = Tensor::zeros({t_len, d});
  for (double& v : out->values) v = static_cast<double>(r.f32("feature payload"));
  if (!r.at_end())
    throw format_error("'" + path + "': trailing bytes after feature payload", r.offset());
  return out;
}

void write_label_file(const std::string& path, const LabelSequence& labels,
                      const ClassVocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw format_error("cannot open label file '" + path + "' for writing", 0);
  for (std::size_t cls : labels) out << vocab.name(cls) << "\n";
  if (!out) throw format_error("failed writing label file '" + path + "'", 0);
}

LabelSequence read_label_file(const std::string& path, const ClassVocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw format_error("cannot open label file '" + path + "'", 0);
  LabelSequence labels;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) {
      if (!vocab.contains(line))
        throw format_error("'" + path + "': unknown class '" + line + "'", offset);
      labels.push_back(vocab.id(line));
    }
    offset += line.size() + 1;
  }
  if (labels.empty()) throw format_error("'" + path + "': no labels found", 0);
  return labels;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw format_error("cannot open manifest '" + path + "' for writing", 0);
  for (const ManifestEntry& e : entries)
    out << e.split << '\t' << e.task << '\t' << e.feature_path << '\t' << e.label_path << "\n";
  if (!out) throw format_error("failed writing manifest '" + path + "'", 0);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw format_error("cannot open manifest '" + path + "'", 0);
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) {
      std::vector<std::string> fields;
      std::size_t start = 0;
      while (true) {
        const std::size_t tab = line.find('\t', start);
        fields.push_back(line.substr(start, tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
      }
      if (fields.size() != 4)
        throw format_error("'" + path + "': expected 4 tab-separated fields, got " +
                               std::to_string(fields.size()),
                           offset);
      entries.push_back(ManifestEntry{fields[0], fields[1], fields[2], fields[3]});
    }
    offset += line.size() + 1;
  }
  if (entries.empty()) throw format_error("'" + path + "': empty manifest", 0);
  return entries;
}

TransitionMatrix transition_matrix_from_grammar(const TaskGrammar& grammar,
                                                const ClassVocabulary& vocab) {
  grammar.validate(vocab);
  const std::size_t c = vocab.size();
  std::vector<double> invalid(c * c, 1.0);
  for (std::size_t i = 0; i < c; ++i) invalid[i * c + i] = 0.0;
  for (const auto& [task, seq] : grammar.tasks())
    for (std::size_t k = 1; k < seq.size(); ++k)
      invalid[vocab.id(seq[k - 1]) * c + vocab.id(seq[k])] = 0.0;
  return TransitionMatrix::from_values(c, invalid);
}

namespace {

std::string video_stem(const std::string& split, const std::string& task, std::size_t index,
                       std::size_t aug) {
  char buf[160];
  if (aug == 0)
    std::snprintf(buf, sizeof buf, "%s_%s_%04zu", split.c_str(), task.c_str(), index);
  else
    std::snprintf(buf, sizeof buf, "%s_%s_%04zu_aug%zu", split.c_str(), task.c_str(), index, aug);
  return buf;
}

TensorPtr jittered(const Tensor& src, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto out = Tensor::zeros(src.shape);
  for (std::size_t i = 0; i < src.numel(); ++i) out->values[i] = src.values[i] + scale * normal(rng);
  return out;
}

}  // namespace

BuildSummary build_synthetic_dataset(const std::string& root_dir, const TaskGrammar& grammar,
                                     const ClassVocabulary& vocab, const SplitSpec& split,
                                     const SyntheticGenConfig& cfg) {
  grammar.validate(vocab);
  const SplitCounts counts = split_counts(split, grammar.size());
  const std::size_t train_originals = split.videos_per_task - counts.val_per_task;

  fs::create_directories(fs::path(root_dir) / "features");
  fs::create_directories(fs::path(root_dir) / "labels");

  std::vector<ManifestEntry> entries;
  std::size_t files = 0;
  const std::vector<std::string> tasks = grammar.task_names();
  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    const std::string& task = tasks[ti];
    for (std::size_t v = 0; v < split.videos_per_task; ++v) {
      const bool is_train = v < train_originals;
      const std::string split_name = is_train ? "train" : "val";
      const Demo demo = generate_demo(task, grammar, vocab, cfg, mix_seed(cfg.seed, ti, v, 0));

      const std::size_t copies = is_train ? 1 + split.augmentations : 1;
      for (std::size_t aug = 0; aug < copies; ++aug) {
        const std::string stem = video_stem(split_name, task, v, aug);
        const std::string rgb_rel = "features/" + stem + ".rgb.fseq";
        const std::string flow_rel = "features/" + stem + ".flow.fseq";
        const std::string label_rel = "labels/" + stem + ".txt";

        TensorPtr rgb = demo.rgb.data;
        TensorPtr flow = demo.flow.data;
        if (aug > 0) {
          std::mt19937_64 aug_rng(mix_seed(cfg.seed, ti, v, aug));
          rgb = jittered(*rgb, cfg.aug_jitter, aug_rng);
          flow = jittered(*flow, cfg.aug_jitter, aug_rng);
        }
        write_feature_file((fs::path(root_dir) / rgb_rel).string(), *rgb);
        write_feature_file((fs::path(root_dir) / flow_rel).string(), *flow);
        write_label_file((fs::path(root_dir) / label_rel).string(), demo.labels, vocab);
        files += 3;
        entries.push_back(ManifestEntry{split_name, task, rgb_rel, label_rel});
      }
    }
  }

  BuildSummary summary;
  summary.counts = counts;
  summary.files_written = files;
  summary.mapping_path = (fs::path(root_dir) / "classes.txt").string();
  summary.transitions_path = (fs::path(root_dir) / "transitions.txt").string();
  summary.manifest_path = (fs::path(root_dir) / "manifest.tsv").string();
  vocab.save(summary.mapping_path);
  transition_matrix_from_grammar(grammar, vocab).save(summary.transitions_path);
  write_manifest(summary.manifest_path, entries);
  return summary;
}

Dataset load_dataset(const std::string& manifest_path, const ClassVocabulary& vocab) {
  const fs::path base = fs::path(manifest_path).parent_path();
  const auto resolve = [&base](const std::string& p) {
    return fs::path(p).is_absolute() ? p : (base / p).string();
  };

  Dataset data;
  for (const ManifestEntry& e : read_manifest(manifest_path)) {
    VideoSample sample;
    sample.split = e.split;
    sample.task = e.task;

    const std::size_t token = e.feature_path.find(".rgb.");
    TensorPtr rgb = read_feature_file(resolve(e.feature_path));
    TensorPtr flow;
    if (token == std::string::npos) {
      // Single-stream import: reuse the matrix for both modality slots.
      flow = Tensor::from(rgb->shape, rgb->values);
    } else {
      std::string flow_path = e.feature_path;
      flow_path.replace(token, 5, ".flow.");
      flow = read_feature_file(resolve(flow_path));
    }
    sample.rgb = FeatureSequence{Modality::rgb, rgb};
    sample.flow = FeatureSequence{Modality::flow, flow};
    sample.labels = read_label_file(resolve(e.label_path), vocab);

    if (sample.labels.size() != sample.rgb.T() || sample.rgb.T() != sample.flow.T() ||
        sample.rgb.D() != sample.flow.D())
      throw format_error("manifest entry '" + e.feature_path +
                             "': feature and label lengths disagree",
                         0);

    if (e.split == "train")
      data.train.push_back(std::move(sample));
    else if (e.split == "val")
      data.val.push_back(std::move(sample));
    else
      throw format_error("manifest '" + manifest_path + "': unknown split '" + e.split + "'", 0);
  }
  return data;
}

}  // namespace subseg
