#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "subseg/fusion.hpp"
#include "subseg/labels.hpp"
#include "subseg/loss.hpp"
#include "subseg/tensor.hpp"

namespace subseg {

// Ordered class-name table with dense ids from 0.
class ClassVocabulary {
 public:
  ClassVocabulary() = default;
  explicit ClassVocabulary(std::vector<std::string> names);

  // The eight manipulation sub-tasks, id order fixed.
  static ClassVocabulary default_subtasks();

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t id) const;
  std::size_t id(const std::string& name) const;
  bool contains(const std::string& name) const { return ids_.count(name) != 0; }
  const std::vector<std::string>& names() const { return names_; }

  // Mapping file: lines "id<space>name", ids dense from 0.
  static ClassVocabulary load(const std::string& path);
  void save(const std::string& path) const;

 private:
  std::vector<std::string> names_;
  std::map<std::string, std::size_t> ids_;
};

// Task name -> ordered sub-task sequence (repeats allowed and preserved).
class TaskGrammar {
 public:
  TaskGrammar() = default;
  explicit TaskGrammar(std::vector<std::pair<std::string, std::vector<std::string>>> tasks);

  // The four bench tasks: pick_place, pick_pour, cleaning, pick_give.
  static TaskGrammar default_tasks();

  std::size_t size() const { return tasks_.size(); }
  const std::vector<std::string>& sequence(const std::string& task) const;
  std::vector<std::string> task_names() const;
  const std::vector<std::pair<std::string, std::vector<std::string>>>& tasks() const {
    return tasks_;
  }
  void validate(const ClassVocabulary& vocab) const;

 private:
  std::vector<std::pair<std::string, std::vector<std::string>>> tasks_;
};

struct SplitSpec {
  double r_val = 0.2;                  // holdout fraction
  std::size_t videos_per_task = 200;   // N_t
  std::size_t augmentations = 2;       // |A|
};

struct SplitCounts {
  std::size_t train_aug_per_task = 0;  // (1 - r_val) * N_t * (1 + |A|)
  std::size_t total_train = 0;
  std::size_t val_per_task = 0;        // r_val * N_t
};

// Throws config_error when the fractions do not produce integral counts.
SplitCounts split_counts(const SplitSpec& spec, std::size_t num_tasks);

struct SyntheticGenConfig {
  std::size_t feature_dim = 64;   // channels per modality
  std::size_t min_duration = 8;   // frames per sub-task segment
  std::size_t max_duration = 24;
  double noise = 0.35;            // additive Gaussian scale on every channel
  double aug_jitter = 0.1;        // extra jitter for augmented copies
  std::uint64_t seed = 1;         // root seed; prototypes derive from it alone
};

struct Demo {
  FeatureSequence rgb;
  FeatureSequence flow;
  LabelSequence labels;
};

// One synthetic demonstration following the task's sub-task order. The
// class-discriminative prototype lands in the class's dominant stream
// (flow for reach/retract/wipe/move, rgb otherwise); the other stream gets
// pure noise.
Demo generate_demo(const std::string& task, const TaskGrammar& grammar,
                   const ClassVocabulary& vocab, const SyntheticGenConfig& cfg,
                   std::uint64_t video_seed);

// Per-channel z-score statistics over both streams (rgb channels first,
// then flow channels). Always fit on training data only.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> stdev;  // floored at 1e-8

  void apply(const TensorPtr& rgb, const TensorPtr& flow) const;
  static Normalizer load(const std::string& path);
  void save(const std::string& path) const;
};

struct VideoSample {
  std::string split;
  std::string task;
  FeatureSequence rgb;
  FeatureSequence flow;
  LabelSequence labels;
};

struct Dataset {
  std::vector<VideoSample> train;
  std::vector<VideoSample> val;
};

Normalizer fit_normalizer(const std::vector<VideoSample>& train);
void apply_normalizer(const Normalizer& n, Dataset& data);

// Binary feature container (magic "SSEQ1", u32 T, u32 D, T*D f32, row-major).
void write_feature_file(const std::string& path, const Tensor& features);
TensorPtr read_feature_file(const std::string& path);

// Text label container: one class name per line.
void write_label_file(const std::string& path, const LabelSequence& labels,
                      const ClassVocabulary& vocab);
LabelSequence read_label_file(const std::string& path, const ClassVocabulary& vocab);

struct ManifestEntry {
  std::string split;
  std::string task;
  std::string feature_path;  // rgb stream; flow path derives via ".rgb." -> ".flow."
  std::string label_path;
};

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

// Transition i -> j is valid iff j == i or j directly follows i in some
// task sequence; everything else is marked invalid (1) in the result.
TransitionMatrix transition_matrix_from_grammar(const TaskGrammar& grammar,
                                                const ClassVocabulary& vocab);

struct BuildSummary {
  std::string manifest_path;
  std::string mapping_path;
  std::string transitions_path;
  SplitCounts counts;
  std::size_t files_written = 0;
};

// Generates the full synthetic corpus under root_dir: features, labels,
// class mapping, grammar-derived transition matrix, and the manifest.
BuildSummary build_synthetic_dataset(const std::string& root_dir, const TaskGrammar& grammar,
                                     const ClassVocabulary& vocab, const SplitSpec& split,
                                     const SyntheticGenConfig& cfg);

// Loads every manifest entry into memory. Feature paths without the ".rgb."
// stream token are treated as single-stream imports: the matrix is used for
// both modality slots (independently copied).
Dataset load_dataset(const std::string& manifest_path, const ClassVocabulary& vocab);

}  // namespace subseg
