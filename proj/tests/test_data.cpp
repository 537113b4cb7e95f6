#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "subseg/data.hpp"
#include "subseg/errors.hpp"
#include "subseg/metrics.hpp"

using namespace subseg;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("subseg_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

LabelSequence transcript_of(const LabelSequence& labels) {
  LabelSequence out;
  for (const Segment& s : to_segments(labels)) out.push_back(s.cls);
  return out;
}

}  // namespace

TEST_CASE("default vocabulary and mapping file round trip") {
  ClassVocabulary vocab = ClassVocabulary::default_subtasks();
  REQUIRE(vocab.size() == 8);
  CHECK(vocab.name(0) == "reach");
  CHECK(vocab.name(1) == "pick");
  CHECK(vocab.name(2) == "move");
  CHECK(vocab.name(3) == "pour");
  CHECK(vocab.name(4) == "give");
  CHECK(vocab.name(5) == "place");
  CHECK(vocab.name(6) == "wipe");
  CHECK(vocab.name(7) == "retract");
  CHECK(vocab.id("wipe") == 6);
  CHECK_THROWS_AS(vocab.id("jump"), lookup_error);
  CHECK_THROWS_AS(vocab.name(8), lookup_error);
  CHECK_THROWS_AS(ClassVocabulary({"a", "a"}), parameter_error);

  TempDir dir("vocab");
  vocab.save(dir.file("classes.txt"));
  ClassVocabulary back = ClassVocabulary::load(dir.file("classes.txt"));
  CHECK(back.names() == vocab.names());

  std::ofstream(dir.file("sparse.txt")) << "0 reach\n2 pick\n";
  CHECK_THROWS_AS(ClassVocabulary::load(dir.file("sparse.txt")), format_error);
  std::ofstream(dir.file("dupe.txt")) << "0 reach\n1 reach\n";
  CHECK_THROWS_AS(ClassVocabulary::load(dir.file("dupe.txt")), format_error);
  CHECK_THROWS_AS(ClassVocabulary::load(dir.file("missing.txt")), format_error);
}

TEST_CASE("default task grammar") {
  TaskGrammar grammar = TaskGrammar::default_tasks();
  REQUIRE(grammar.size() == 4);
  CHECK(grammar.sequence("pick_place") ==
        std::vector<std::string>{"reach", "pick", "move", "place", "retract"});
  CHECK(grammar.sequence("pick_pour") ==
        std::vector<std::string>{"reach", "pick", "move", "pour", "move", "place", "retract"});
  CHECK(grammar.sequence("cleaning") == std::vector<std::string>{"reach", "wipe", "retract"});
  CHECK(grammar.sequence("pick_give") ==
        std::vector<std::string>{"reach", "pick", "give", "retract"});
  CHECK_THROWS_AS(grammar.sequence("stack"), lookup_error);

  grammar.validate(ClassVocabulary::default_subtasks());
  CHECK_THROWS_AS(grammar.validate(ClassVocabulary({"reach", "pick"})), config_error);
}

TEST_CASE("split arithmetic") {
  // The bench numbers: 200 videos/task, 20% holdout, two augmentations,
  // four tasks.
  SplitCounts c = split_counts(SplitSpec{0.2, 200, 2}, 4);
  CHECK(c.val_per_task == 40);
  CHECK(c.train_aug_per_task == 480);
  CHECK(c.total_train == 1920);
  CHECK(c.val_per_task * 4 == 160);

  SplitCounts plain = split_counts(SplitSpec{0.0, 10, 0}, 4);
  CHECK(plain.val_per_task == 0);
  CHECK(plain.train_aug_per_task == 10);

  CHECK_THROWS_AS(split_counts(SplitSpec{0.15, 10, 0}, 4), config_error);
  CHECK_THROWS_AS(split_counts(SplitSpec{1.0, 10, 0}, 4), config_error);
  CHECK_THROWS_AS(split_counts(SplitSpec{0.2, 0, 0}, 4), config_error);
}

TEST_CASE("synthetic demos follow the task script deterministically") {
  ClassVocabulary vocab = ClassVocabulary::default_subtasks();
  TaskGrammar grammar = TaskGrammar::default_tasks();
  SyntheticGenConfig cfg;
  cfg.feature_dim = 12;

  Demo a = generate_demo("pick_pour", grammar, vocab, cfg, 77);
  Demo b = generate_demo("pick_pour", grammar, vocab, cfg, 77);
  CHECK(a.labels == b.labels);
  CHECK(a.rgb.data->values == b.rgb.data->values);
  CHECK(a.flow.data->values == b.flow.data->values);

  Demo c = generate_demo("pick_pour", grammar, vocab, cfg, 78);
  CHECK(a.rgb.data->values != c.rgb.data->values);

  LabelSequence want;
  for (const std::string& sub : grammar.sequence("pick_pour")) want.push_back(vocab.id(sub));
  CHECK(transcript_of(a.labels) == want);
  for (const Segment& s : to_segments(a.labels)) {
    CHECK(s.length() >= cfg.min_duration);
    CHECK(s.length() <= cfg.max_duration);
  }

  SyntheticGenConfig bad = cfg;
  bad.min_duration = 5;
  bad.max_duration = 4;
  CHECK_THROWS_AS(generate_demo("cleaning", grammar, vocab, bad, 1), parameter_error);
}

TEST_CASE("noise-free demos are nearest-prototype separable") {
  ClassVocabulary vocab = ClassVocabulary::default_subtasks();
  TaskGrammar grammar = TaskGrammar::default_tasks();
  SyntheticGenConfig cfg;
  cfg.feature_dim = 10;
  cfg.noise = 0.0;

  // With zero noise every frame of a class is the class prototype in its
  // dominant stream, so frames from a second video classify exactly against
  // exemplars collected from the first.
  std::map<std::size_t, std::vector<double>> exemplar_rgb, exemplar_flow;
  for (const std::string& task : grammar.task_names()) {
    Demo d = generate_demo(task, grammar, vocab, cfg, 5);
    for (std::size_t t = 0; t < d.labels.size(); ++t) {
      const std::size_t cls = d.labels[t];
      if (exemplar_rgb.count(cls)) continue;
      exemplar_rgb[cls] = {d.rgb.data->values.begin() + t * cfg.feature_dim,
                           d.rgb.data->values.begin() + (t + 1) * cfg.feature_dim};
      exemplar_flow[cls] = {d.flow.data->values.begin() + t * cfg.feature_dim,
                            d.flow.data->values.begin() + (t + 1) * cfg.feature_dim};
    }
  }
  CHECK(exemplar_rgb.size() == 8);

  for (const std::string& task : grammar.task_names()) {
    Demo d = generate_demo(task, grammar, vocab, cfg, 99);
    for (std::size_t t = 0; t < d.labels.size(); ++t) {
      std::size_t best = 8;
      double best_dist = 1e300;
      for (const auto& [cls, rgb_proto] : exemplar_rgb) {
        double dist = 0.0;
        for (std::size_t k = 0; k < cfg.feature_dim; ++k) {
          const double dr = d.rgb.data->at(t, k) - rgb_proto[k];
          const double df = d.flow.data->at(t, k) - exemplar_flow.at(cls)[k];
          dist += dr * dr + df * df;
        }
        if (dist < best_dist) {
          best_dist = dist;
          best = cls;
        }
      }
      CHECK(best == d.labels[t]);
    }
  }
}

TEST_CASE("z-score normalizer: fit on train, apply everywhere") {
  ClassVocabulary vocab = ClassVocabulary::default_subtasks();
  TaskGrammar grammar = TaskGrammar::default_tasks();
  SyntheticGenConfig cfg;
  cfg.feature_dim = 6;

  std::vector<VideoSample> train;
  for (std::uint64_t s = 0; s < 4; ++s) {
    Demo d = generate_demo("pick_place", grammar, vocab, cfg, 100 + s);
    train.push_back(VideoSample{"train", "pick_place", d.rgb, d.flow, d.labels});
  }
  // Plant a constant channel to exercise the variance floor.
  for (VideoSample& v : train)
    for (std::size_t t = 0; t < v.rgb.T(); ++t) v.rgb.data->at(t, 2) = 3.5;

  Normalizer n = fit_normalizer(train);
  REQUIRE(n.mean.size() == 12);
  REQUIRE(n.stdev.size() == 12);
  CHECK(n.mean[2] == doctest::Approx(3.5));
  CHECK(n.stdev[2] == doctest::Approx(1e-8));

  for (VideoSample& v : train) n.apply(v.rgb.data, v.flow.data);
  std::size_t frames = 0;
  std::vector<double> mean(12, 0.0), var(12, 0.0);
  for (const VideoSample& v : train) {
    frames += v.rgb.T();
    for (std::size_t t = 0; t < v.rgb.T(); ++t)
      for (std::size_t c = 0; c < 6; ++c) {
        mean[c] += v.rgb.data->at(t, c);
        mean[6 + c] += v.flow.data->at(t, c);
      }
  }
  for (double& m : mean) m /= static_cast<double>(frames);
  for (const VideoSample& v : train)
    for (std::size_t t = 0; t < v.rgb.T(); ++t)
      for (std::size_t c = 0; c < 6; ++c) {
        var[c] += std::pow(v.rgb.data->at(t, c) - mean[c], 2);
        var[6 + c] += std::pow(v.flow.data->at(t, c) - mean[6 + c], 2);
      }
  for (std::size_t c = 0; c < 12; ++c) {
    CHECK(mean[c] == doctest::Approx(0.0).epsilon(1e-9));
    if (c != 2)  // the planted constant channel normalizes to all-zero
      CHECK(std::sqrt(var[c] / static_cast<double>(frames)) == doctest::Approx(1.0));
  }

  // Statistics came from train alone: a shifted holdout stream does not
  // land on zero mean.
  Demo held = generate_demo("pick_place", grammar, vocab, cfg, 999);
  for (double& v : held.rgb.data->values) v += 5.0;
  n.apply(held.rgb.data, held.flow.data);
  double held_mean = 0.0;
  for (double v : held.rgb.data->values) held_mean += v;
  held_mean /= static_cast<double>(held.rgb.data->numel());
  CHECK(std::fabs(held_mean) > 1.0);

  TempDir dir("norm");
  n.save(dir.file("normalizer.txt"));
  Normalizer back = Normalizer::load(dir.file("normalizer.txt"));
  CHECK(back.mean == n.mean);
  CHECK(back.stdev == n.stdev);

  CHECK_THROWS_AS(fit_normalizer({}), usage_error);
}

TEST_CASE("feature container round trip and corruption detection") {
  TempDir dir("fseq");
  auto m = Tensor::zeros({7, 5});
  for (std::size_t i = 0; i < m->numel(); ++i)
    m->values[i] = static_cast<double>(static_cast<float>(0.37 * static_cast<double>(i) - 2.0));
  write_feature_file(dir.file("a.fseq"), *m);
  TensorPtr back = read_feature_file(dir.file("a.fseq"));
  REQUIRE(back->shape == m->shape);
  CHECK(back->values == m->values);

  // Truncate the payload: reads must fail with a byte offset, not garbage.
  const auto full = slurp(dir.file("a.fseq"));
  std::ofstream(dir.file("cut.fseq"), std::ios::binary)
      .write(full.data(), static_cast<std::streamsize>(full.size() - 6));
  CHECK_THROWS_AS(read_feature_file(dir.file("cut.fseq")), format_error);
  try {
    read_feature_file(dir.file("cut.fseq"));
  } catch (const format_error& e) {
    CHECK(e.offset() > 5);
  }

  std::ofstream(dir.file("junk.fseq"), std::ios::binary) << "NOTIT followed by junk";
  CHECK_THROWS_AS(read_feature_file(dir.file("junk.fseq")), format_error);

  auto padded = full;
  padded.push_back('\0');
  std::ofstream(dir.file("pad.fseq"), std::ios::binary)
      .write(padded.data(), static_cast<std::streamsize>(padded.size()));
  CHECK_THROWS_AS(read_feature_file(dir.file("pad.fseq")), format_error);

  CHECK_THROWS_AS(read_feature_file(dir.file("missing.fseq")), format_error);
}

TEST_CASE("label file round trip") {
  TempDir dir("labels");
  ClassVocabulary vocab = ClassVocabulary::default_subtasks();
  LabelSequence labels{0, 0, 1, 2, 2, 7};
  write_label_file(dir.file("l.txt"), labels, vocab);
  CHECK(read_label_file(dir.file("l.txt"), vocab) == labels);

  std::ofstream(dir.file("bad.txt")) << "reach\nfly\n";
  CHECK_THROWS_AS(read_label_file(dir.file("bad.txt"), vocab), format_error);
  try {
    read_label_file(dir.file("bad.txt"), vocab);
  } catch (const format_error& e) {
    CHECK(e.offset() == 6);  // "reach\n" precedes the offending line
  }

  // Windows line endings are tolerated.
  std::ofstream(dir.file("crlf.txt"), std::ios::binary) << "reach\r\npick\r\n";
  CHECK(read_label_file(dir.file("crlf.txt"), vocab) == LabelSequence{0, 1});
}

TEST_CASE("manifest round trip") {
  TempDir dir("manifest");
  std::vector<ManifestEntry> entries{
      {"train", "pick_place", "features/a.rgb.fseq", "labels/a.txt"},
      {"val", "cleaning", "features/b.rgb.fseq", "labels/b.txt"},
  };
  write_manifest(dir.file("m.tsv"), entries);
  auto back = read_manifest(dir.file("m.tsv"));
  REQUIRE(back.size() == 2);
  CHECK(back[0].split == "train");
  CHECK(back[0].task == "pick_place");
  CHECK(back[0].feature_path == "features/a.rgb.fseq");
  CHECK(back[1].label_path == "labels/b.txt");

  std::ofstream(dir.file("short.tsv")) << "train\tpick_place\tonly_three_fields\n";
  CHECK_THROWS_AS(read_manifest(dir.file("short.tsv")), format_error);
  std::ofstream(dir.file("empty.tsv")) << "\n";
  CHECK_THROWS_AS(read_manifest(dir.file("empty.tsv")), format_error);
}

TEST_CASE("grammar-derived transition validity") {
  ClassVocabulary vocab = ClassVocabulary::default_subtasks();
  TaskGrammar grammar = TaskGrammar::default_tasks();
  TransitionMatrix m = transition_matrix_from_grammar(grammar, vocab);
  REQUIRE(m.classes() == 8);

  const auto invalid = [&](const std::string& a, const std::string& b) {
    return m.m->at(vocab.id(a), vocab.id(b)) == 1.0;
  };
  // Every adjacent pair of every task is valid.
  for (const auto& [task, seq] : grammar.tasks())
    for (std::size_t k = 1; k < seq.size(); ++k) CHECK(!invalid(seq[k - 1], seq[k]));
  // Self-transitions are always valid.
  for (std::size_t c = 0; c < 8; ++c) CHECK(m.m->at(c, c) == 0.0);
  // Pairs no task produces are forbidden.
  CHECK(invalid("pick", "reach"));
  CHECK(invalid("retract", "reach"));
  CHECK(invalid("pour", "place"));
  CHECK(invalid("give", "place"));
  CHECK(invalid("wipe", "pick"));
}

TEST_CASE("dataset build and reload") {
  TempDir dir("corpus");
  ClassVocabulary vocab = ClassVocabulary::default_subtasks();
  TaskGrammar grammar = TaskGrammar::default_tasks();
  SplitSpec split{0.2, 5, 1};
  SyntheticGenConfig cfg;
  cfg.feature_dim = 9;
  cfg.min_duration = 4;
  cfg.max_duration = 7;

  BuildSummary summary = build_synthetic_dataset(dir.file("data"), grammar, vocab, split, cfg);
  CHECK(summary.counts.val_per_task == 1);
  CHECK(summary.counts.train_aug_per_task == 8);
  CHECK(summary.counts.total_train == 32);
  CHECK(summary.files_written == 3 * 36);
  CHECK(fs::exists(summary.manifest_path));
  CHECK(fs::exists(summary.mapping_path));
  CHECK(fs::exists(summary.transitions_path));

  Dataset data = load_dataset(summary.manifest_path, vocab);
  CHECK(data.train.size() == 32);
  CHECK(data.val.size() == 4);
  for (const VideoSample& v : data.train) {
    CHECK(v.rgb.T() == v.labels.size());
    CHECK(v.rgb.D() == 9);
    CHECK(v.flow.D() == 9);
    LabelSequence want;
    for (const std::string& sub : grammar.sequence(v.task)) want.push_back(vocab.id(sub));
    CHECK(transcript_of(v.labels) == want);
  }

  // The loaded transition matrix matches a fresh derivation.
  TransitionMatrix from_disk = TransitionMatrix::load(summary.transitions_path);
  CHECK(from_disk.m->values == transition_matrix_from_grammar(grammar, vocab).m->values);

  // Regenerating under the same seed is byte-identical.
  BuildSummary again = build_synthetic_dataset(dir.file("data2"), grammar, vocab, split, cfg);
  CHECK(slurp(summary.manifest_path) == slurp(again.manifest_path));
  CHECK(slurp(dir.file("data") + "/features/train_pick_place_0000.rgb.fseq") ==
        slurp(dir.file("data2") + "/features/train_pick_place_0000.rgb.fseq"));
  CHECK(slurp(dir.file("data") + "/features/train_cleaning_0003_aug1.flow.fseq") ==
        slurp(dir.file("data2") + "/features/train_cleaning_0003_aug1.flow.fseq"));
}

TEST_CASE("single-stream imports duplicate the matrix into both slots") {
  TempDir dir("import");
  ClassVocabulary vocab = ClassVocabulary::default_subtasks();
  auto m = Tensor::zeros({4, 3});
  for (std::size_t i = 0; i < m->numel(); ++i) m->values[i] = static_cast<double>(i);
  write_feature_file(dir.file("ext.fseq"), *m);
  std::ofstream(dir.file("l.txt")) << "reach\nreach\npick\npick\n";
  std::ofstream(dir.file("m.tsv")) << "val\timported\text.fseq\tl.txt\n";

  Dataset data = load_dataset(dir.file("m.tsv"), vocab);
  REQUIRE(data.val.size() == 1);
  const VideoSample& v = data.val[0];
  CHECK(v.rgb.data->values == v.flow.data->values);
  CHECK(v.rgb.data.get() != v.flow.data.get());

  // Length mismatch between features and labels is rejected.
  std::ofstream(dir.file("l2.txt")) << "reach\npick\n";
  std::ofstream(dir.file("m2.tsv")) << "val\timported\text.fseq\tl2.txt\n";
  CHECK_THROWS_AS(load_dataset(dir.file("m2.tsv"), vocab), format_error);

  std::ofstream(dir.file("m3.tsv")) << "test\timported\text.fseq\tl.txt\n";
  CHECK_THROWS_AS(load_dataset(dir.file("m3.tsv"), vocab), format_error);
}
