#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "subseg/data.hpp"
#include "subseg/errors.hpp"
#include "subseg/trainer.hpp"

using namespace subseg;
namespace fs = std::filesystem;

namespace {

// Small but full-capacity setup that overfits a couple of videos in seconds.
ModelConfig tiny_model_config(std::size_t feature_dim) {
  ModelConfig mc;
  mc.stages = 2;
  mc.layers = 3;
  mc.channels = 8;
  mc.classes = 8;
  mc.feature_dim = feature_dim;
  mc.dropout = 0.1;
  mc.seed = 7;
  return mc;
}

Dataset tiny_dataset(std::size_t train_videos, std::size_t val_videos, std::size_t feature_dim) {
  ClassVocabulary vocab = ClassVocabulary::default_subtasks();
  TaskGrammar grammar = TaskGrammar::default_tasks();
  SyntheticGenConfig cfg;
  cfg.feature_dim = feature_dim;
  cfg.min_duration = 5;
  cfg.max_duration = 9;
  cfg.noise = 0.15;

  Dataset data;
  for (std::size_t v = 0; v < train_videos; ++v) {
    Demo d = generate_demo("pick_place", grammar, vocab, cfg, 1000 + v);
    data.train.push_back(VideoSample{"train", "pick_place", d.rgb, d.flow, d.labels});
  }
  for (std::size_t v = 0; v < val_videos; ++v) {
    Demo d = generate_demo("pick_place", grammar, vocab, cfg, 1000 + v);
    data.val.push_back(VideoSample{"val", "pick_place", d.rgb, d.flow, d.labels});
  }
  return data;
}

TrainConfig quick_train_config() {
  TrainConfig tc;
  tc.eta0 = 0.02;  // hot: one whole-video step per epoch, so memorization needs few epochs
  tc.warmup_epochs = 5;
  tc.max_epochs = 200;
  tc.batch_videos = 1;
  tc.patience = 200;
  tc.min_run = 3;
  return tc;
}

}  // namespace

TEST_CASE("training defaults carry the published hyperparameters") {
  TrainConfig tc;
  CHECK(tc.eta0 == 5e-4);
  CHECK(tc.warmup_epochs == 5);
  CHECK(tc.max_epochs == 50);
  CHECK(tc.batch_videos == 8);
  CHECK(tc.clip_norm == 5.0);
  CHECK(tc.patience == 5);
  CHECK(tc.beta1 == 0.9);
  CHECK(tc.beta2 == 0.999);
  CHECK(tc.eps == 1e-8);
}

TEST_CASE("learning-rate schedule: warmup, continuity, cosine tail") {
  TrainConfig tc;
  tc.eta0 = 1.0;
  tc.warmup_epochs = 4;
  tc.max_epochs = 24;

  CHECK(lr_at(0, tc) == doctest::Approx(0.25));
  CHECK(lr_at(1, tc) == doctest::Approx(0.5));
  CHECK(lr_at(3, tc) == doctest::Approx(1.0));   // warmup tops out at eta0
  CHECK(lr_at(4, tc) == doctest::Approx(1.0));   // cosine starts at eta0: continuous
  CHECK(lr_at(14, tc) == doctest::Approx(0.5));  // halfway through the decay
  for (std::size_t e = 4; e + 1 < 24; ++e) CHECK(lr_at(e + 1, tc) < lr_at(e, tc) + 1e-15);

  TrainConfig deep = tc;
  deep.max_epochs = 2000;
  deep.warmup_epochs = 5;
  CHECK(lr_at(0, deep) == doctest::Approx(0.2));
  CHECK(lr_at(1999, deep) < 1e-6);

  CHECK_THROWS_AS(lr_at(24, tc), parameter_error);
  TrainConfig bad = tc;
  bad.warmup_epochs = 30;
  CHECK_THROWS_AS(lr_at(0, bad), parameter_error);
}

TEST_CASE("adamw: fixed point, decoupled decay, bowl convergence") {
  TrainConfig tc;

  auto w = Tensor::from({2}, {1.5, -0.5}, true);
  OptimizerState state = OptimizerState::init({w});

  SUBCASE("zero gradients without decay leave parameters untouched") {
    TrainConfig no_decay = tc;
    no_decay.weight_decay = 0.0;
    adamw_step({w}, state, 0.1, no_decay);
    CHECK(w->values[0] == 1.5);
    CHECK(w->values[1] == -0.5);
  }

  SUBCASE("zero gradients with decay shrink parameters geometrically") {
    tc.weight_decay = 0.01;
    const double factor = 1.0 - 0.1 * 0.01;
    adamw_step({w}, state, 0.1, tc);
    adamw_step({w}, state, 0.1, tc);
    CHECK(w->values[0] == doctest::Approx(1.5 * factor * factor));
    CHECK(w->values[1] == doctest::Approx(-0.5 * factor * factor));
  }

  SUBCASE("minimizes a quadratic bowl") {
    TrainConfig pure = tc;
    pure.weight_decay = 0.0;
    auto x = Tensor::from({1}, {1.0}, true);
    OptimizerState s = OptimizerState::init({x});
    for (int step = 0; step < 200; ++step) {
      x->grad[0] = 2.0 * x->values[0];
      adamw_step({x}, s, 0.1, pure);
    }
    CHECK(std::fabs(x->values[0]) < 1e-3);
  }

  SUBCASE("non-finite gradients abort with the parameter block") {
    w->grad[1] = std::nan("");
    CHECK_THROWS_AS(adamw_step({w}, state, 0.1, tc), numeric_error);
    try {
      adamw_step({w}, state, 0.1, tc);
    } catch (const numeric_error& e) {
      CHECK(std::string(e.what()).find("parameter block 0") != std::string::npos);
    }
  }
}

TEST_CASE("global gradient norm clipping") {
  auto a = Tensor::from({2}, {0.0, 0.0}, true);
  auto b = Tensor::from({1}, {0.0}, true);
  a->grad = {6.0, 0.0};
  b->grad = {8.0};

  CHECK(clip_global_norm({a, b}, 5.0) == doctest::Approx(10.0));
  CHECK(a->grad[0] == doctest::Approx(3.0));
  CHECK(b->grad[0] == doctest::Approx(4.0));
  double after = std::sqrt(a->grad[0] * a->grad[0] + b->grad[0] * b->grad[0]);
  CHECK(after == doctest::Approx(5.0));

  a->grad = {0.6, 0.0};
  b->grad = {0.8};
  CHECK(clip_global_norm({a, b}, 5.0) == doctest::Approx(1.0));
  CHECK(a->grad[0] == 0.6);  // under the bound: untouched

  a->grad = {0.0, 0.0};
  b->grad = {0.0};
  CHECK(clip_global_norm({a, b}, 5.0) == 0.0);
  CHECK(b->grad[0] == 0.0);

  CHECK_THROWS_AS(clip_global_norm({a, b}, 0.0), parameter_error);
}

TEST_CASE("a single video is memorized to a perfect post-processed score") {
  Dataset data = tiny_dataset(1, 1, 10);
  SegmentationModel model(tiny_model_config(10));
  TransitionMatrix tm = transition_matrix_from_grammar(TaskGrammar::default_tasks(),
                                                       ClassVocabulary::default_subtasks());
  LossConfig loss_cfg;
  FitResult result = fit(model, data, loss_cfg, tm, quick_train_config(), "");

  CHECK(result.best_f1_50 == doctest::Approx(100.0));
  double best_recorded = 0.0;
  for (const EpochRecord& r : result.history) best_recorded = std::max(best_recorded, r.val_f1_50);
  CHECK(result.best_f1_50 == doctest::Approx(best_recorded));
  CHECK(result.best_epoch < result.epochs_run);
}

TEST_CASE("fixed seeds reproduce the loss curve bitwise") {
  TransitionMatrix tm = transition_matrix_from_grammar(TaskGrammar::default_tasks(),
                                                       ClassVocabulary::default_subtasks());
  LossConfig loss_cfg;
  TrainConfig tc = quick_train_config();
  tc.max_epochs = 6;

  Dataset data1 = tiny_dataset(3, 1, 10);
  SegmentationModel m1(tiny_model_config(10));
  FitResult r1 = fit(m1, data1, loss_cfg, tm, tc, "");

  Dataset data2 = tiny_dataset(3, 1, 10);
  SegmentationModel m2(tiny_model_config(10));
  FitResult r2 = fit(m2, data2, loss_cfg, tm, tc, "");

  REQUIRE(r1.history.size() == r2.history.size());
  for (std::size_t e = 0; e < r1.history.size(); ++e) {
    CHECK(r1.history[e].train_loss == r2.history[e].train_loss);
    CHECK(r1.history[e].val_loss == r2.history[e].val_loss);
    CHECK(r1.history[e].val_f1_50 == r2.history[e].val_f1_50);
  }
}

TEST_CASE("run directory artifacts") {
  const fs::path run_dir = fs::temp_directory_path() / "subseg_run_artifacts";
  fs::remove_all(run_dir);

  Dataset data = tiny_dataset(2, 1, 10);
  SegmentationModel model(tiny_model_config(10));
  TransitionMatrix tm = transition_matrix_from_grammar(TaskGrammar::default_tasks(),
                                                       ClassVocabulary::default_subtasks());
  LossConfig loss_cfg;
  TrainConfig tc = quick_train_config();
  tc.warmup_epochs = 2;
  tc.max_epochs = 4;
  FitResult result = fit(model, data, loss_cfg, tm, tc, run_dir.string());

  CHECK(fs::exists(run_dir / "config.txt"));
  CHECK(fs::exists(run_dir / "metrics.log"));
  CHECK(fs::exists(run_dir / "best.ckpt"));
  CHECK(fs::exists(run_dir / "final.ckpt"));

  std::ifstream log((run_dir / "metrics.log").string());
  std::string line;
  std::size_t lines = 0;
  while (std::getline(log, line)) {
    CHECK(line.find("epoch=") == 0);
    CHECK(line.find(" val_f1_50=") != std::string::npos);
    CHECK(line.find(" best=") != std::string::npos);
    ++lines;
  }
  CHECK(lines == result.epochs_run);

  std::ifstream cfg_in((run_dir / "config.txt").string());
  std::string cfg_text((std::istreambuf_iterator<char>(cfg_in)),
                       std::istreambuf_iterator<char>());
  CHECK(cfg_text.find("stages=2") != std::string::npos);
  CHECK(cfg_text.find("eta0=0.02") != std::string::npos);

  // The model keeps the best-epoch weights, and best.ckpt round-trips them.
  SegmentationModel reloaded = SegmentationModel::load((run_dir / "best.ckpt").string());
  auto want = model.forward(nullptr, data.val[0].rgb, data.val[0].flow, false);
  auto got = reloaded.forward(nullptr, data.val[0].rgb, data.val[0].flow, false);
  REQUIRE(want.size() == got.size());
  for (std::size_t s = 0; s < want.size(); ++s) CHECK(want[s]->values == got[s]->values);

  fs::remove_all(run_dir);

  Dataset empty_val = tiny_dataset(1, 1, 10);
  empty_val.val.clear();
  CHECK_THROWS_AS(fit(model, empty_val, loss_cfg, tm, tc, ""), usage_error);
}
