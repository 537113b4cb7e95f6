#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "subseg/data.hpp"
#include "subseg/errors.hpp"
#include "subseg/exec.hpp"
#include "subseg/loss.hpp"
#include "subseg/metrics.hpp"
#include "subseg/model.hpp"
#include "subseg/postprocess.hpp"
#include "subseg/tape.hpp"
#include "subseg/tcn.hpp"
#include "subseg/trainer.hpp"

namespace fs = std::filesystem;
using namespace subseg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::string config_path;  // shared: only the active subcommand can set it

void add_config_option(CLI::App* cmd) {
  cmd->add_option("--config", config_path, "flat key=value config file (flags take precedence)");
}

std::string trim_ws(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

std::vector<std::pair<std::string, std::string>> read_flat_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("config: cannot open '" + path + "'");
  std::vector<std::pair<std::string, std::string>> items;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim_ws(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos || eq == 0)
      throw usage_error("config: line " + std::to_string(lineno) + " is not key=value");
    std::string value = trim_ws(t.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    items.emplace_back(trim_ws(t.substr(0, eq)), value);
  }
  return items;
}

bool flag_given(const std::vector<std::string>& raw, const std::string& key) {
  const std::string bare = "--" + key;
  const std::string prefixed = bare + "=";
  for (const std::string& a : raw)
    if (a == bare || a.rfind(prefixed, 0) == 0) return true;
  return false;
}

// Config precedence is defaults < file < flags: config entries are injected as
// synthetic arguments right after the subcommand, then everything is re-parsed,
// skipping any key the command line already supplies.
void apply_flat_config(CLI::App& app, CLI::App* active, const std::vector<std::string>& raw) {
  if (config_path.empty()) return;
  std::vector<std::string> full;
  full.push_back(raw.front());
  for (const auto& [key, value] : read_flat_config(config_path)) {
    if (key == "config") throw usage_error("config: nested config files are not supported");
    if (active->get_option_no_throw("--" + key) == nullptr)
      throw usage_error("config: unknown key '" + key + "' for subcommand '" +
                        active->get_name() + "'");
    if (flag_given(raw, key)) continue;
    full.push_back("--" + key + "=" + value);
  }
  full.insert(full.end(), raw.begin() + 1, raw.end());
  std::reverse(full.begin(), full.end());  // parse(vector) consumes from the back
  app.parse(full);
}

ScheduleKind parse_schedule(const std::string& name) {
  if (name == "fibonacci") return ScheduleKind::fibonacci;
  if (name == "exponential") return ScheduleKind::exponential;
  throw usage_error("unknown dilation schedule '" + name + "' (fibonacci|exponential)");
}

std::string sibling_default(const std::string& manifest, const std::string& provided,
                            const char* filename) {
  if (!provided.empty()) return provided;
  return (fs::path(manifest).parent_path() / filename).string();
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  std::string out_dir;
  SplitSpec split;
  SyntheticGenConfig gen;
};

int run_gen_data(const GenDataArgs& a) {
  const BuildSummary s = build_synthetic_dataset(a.out_dir, TaskGrammar::default_tasks(),
                                                 ClassVocabulary::default_subtasks(), a.split,
                                                 a.gen);
  std::cout << "manifest=" << s.manifest_path << "\n"
            << "mapping=" << s.mapping_path << "\n"
            << "transitions=" << s.transitions_path << "\n"
            << "train_aug_per_task=" << s.counts.train_aug_per_task << "\n"
            << "total_train=" << s.counts.total_train << "\n"
            << "val_per_task=" << s.counts.val_per_task << "\n"
            << "files_written=" << s.files_written << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string manifest;
  std::string run_dir;
  std::string mapping;
  std::string transitions;
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  bool uniform_class_weights = false;
  std::string schedule_name = "fibonacci";
};

int run_train(TrainArgs& a) {
  a.model.schedule = parse_schedule(a.schedule_name);
  const ClassVocabulary vocab =
      ClassVocabulary::load(sibling_default(a.manifest, a.mapping, "classes.txt"));
  const TransitionMatrix transitions =
      TransitionMatrix::load(sibling_default(a.manifest, a.transitions, "transitions.txt"));
  if (transitions.classes() != vocab.size())
    throw config_error("transition matrix size does not match the class mapping");

  Dataset data = load_dataset(a.manifest, vocab);
  if (data.train.empty()) throw usage_error("train: manifest has no training entries");

  const Normalizer norm = fit_normalizer(data.train);
  apply_normalizer(norm, data);

  a.model.classes = vocab.size();
  a.model.feature_dim = data.train.front().rgb.D();

  if (!a.uniform_class_weights) {
    std::vector<LabelSequence> train_labels;
    for (const VideoSample& v : data.train) train_labels.push_back(v.labels);
    a.loss.class_weights = inverse_frequency_weights(train_labels, vocab.size());
  }

  fs::create_directories(a.run_dir);
  norm.save(a.run_dir + "/normalizer.txt");

  SegmentationModel model(a.model);
  const FitResult result = fit(model, data, a.loss, transitions, a.train, a.run_dir);

  std::cout << "run_dir=" << a.run_dir << "\n"
            << "epochs_run=" << result.epochs_run << "\n"
            << "best_epoch=" << result.best_epoch << "\n"
            << "best_val_f1_50=" << result.best_f1_50 << "\n"
            << "best_checkpoint=" << a.run_dir << "/best.ckpt\n";
  return kExitOk;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::vector<std::string> pred;
  std::vector<std::string> gt;
  std::string mapping;
  bool table = false;
};

int run_eval(const EvalArgs& a) {
  if (a.pred.size() != a.gt.size() || a.pred.empty())
    throw usage_error("eval: need equally many --pred and --gt label files");
  const ClassVocabulary vocab = ClassVocabulary::load(a.mapping);
  std::vector<LabelSequence> preds, gts;
  for (std::size_t i = 0; i < a.pred.size(); ++i) {
    preds.push_back(read_label_file(a.pred[i], vocab));
    gts.push_back(read_label_file(a.gt[i], vocab));
  }
  const MetricReport report = evaluate_many(preds, gts);
  if (a.table) std::cout << format_report_table(report);
  std::cout << format_report_records(report);
  return kExitOk;
}

// ------------------------------------------------------------------- infer

struct InferArgs {
  std::string checkpoint;
  std::string manifest;
  std::string mapping;
  std::string normalizer;
  std::string out_dir;
  std::size_t median_window = 3;
  std::size_t min_run = 5;
  bool no_median = false;
  bool no_collapse = false;
};

int run_infer(const InferArgs& a) {
  const ClassVocabulary vocab =
      ClassVocabulary::load(sibling_default(a.manifest, a.mapping, "classes.txt"));
  SegmentationModel model = SegmentationModel::load(a.checkpoint);
  if (model.config().classes != vocab.size())
    throw config_error("infer: checkpoint class count does not match the mapping");

  Dataset data = load_dataset(a.manifest, vocab);
  if (!a.normalizer.empty()) {
    const Normalizer norm = Normalizer::load(a.normalizer);
    apply_normalizer(norm, data);
  }

  fs::create_directories(a.out_dir);
  const std::vector<ManifestEntry> entries = read_manifest(a.manifest);

  // load_dataset preserves manifest order within each split; rebuild the
  // original order so output names line up with manifest entries.
  std::size_t train_i = 0, val_i = 0;
  std::size_t written = 0;
  for (const ManifestEntry& e : entries) {
    VideoSample& v = e.split == "train" ? data.train[train_i++] : data.val[val_i++];
    auto probs = model.forward(nullptr, v.rgb, v.flow, false);
    LabelSequence pred = argmax_rows(probs.back());
    if (!a.no_median) pred = median_filter(pred, a.median_window);
    if (!a.no_collapse) pred = collapse_short_runs(pred, a.min_run);

    std::string stem = fs::path(e.feature_path).filename().string();
    const std::size_t token = stem.find(".rgb.");
    stem = token == std::string::npos ? stem + ".pred" : stem.substr(0, token);
    const std::string out_path = (fs::path(a.out_dir) / (stem + ".pred.txt")).string();
    write_label_file(out_path, pred, vocab);
    ++written;
  }
  std::cout << "predictions_written=" << written << "\nout_dir=" << a.out_dir << "\n";
  return kExitOk;
}

// ----------------------------------------------------------- simulate-exec

struct SimExecArgs {
  std::string labels;
  std::string mapping;
  std::string out_dir;
  ControllerConfig controller;
  double v_limit = 0.25;
  double tolerance = 1e-3;
  std::size_t num_basis = 20;
  double dt = 1e-3;
};

int run_simulate_exec(SimExecArgs& a) {
  a.controller.v_limit = {a.v_limit, a.v_limit, a.v_limit};
  a.controller.tolerance = {a.tolerance, a.tolerance, a.tolerance};
  const ClassVocabulary vocab = ClassVocabulary::load(a.mapping);
  const TaskGrammar grammar = TaskGrammar::default_tasks();
  const LabelSequence labels = read_label_file(a.labels, vocab);
  const auto goals = default_goal_table();
  const auto library = build_dmp_library(vocab, goals, a.num_basis);

  const ExecutionReport report =
      simulate_execution(labels, vocab, grammar, goals, library, a.controller, a.dt);

  std::cout.precision(6);
  std::cout << "task=" << report.task << "\n";
  if (!a.out_dir.empty()) {
    fs::create_directories(a.out_dir);
    PrimitivePlan plan;
    plan.task = report.task;
    for (const PrimitiveResult& p : report.primitives)
      plan.steps.push_back(PlanStep{p.subtask, p.goal});
    write_plan_file((fs::path(a.out_dir) / "plan.tsv").string(), plan);
  }
  for (std::size_t i = 0; i < report.primitives.size(); ++i) {
    const PrimitiveResult& p = report.primitives[i];
    std::cout << "primitive=" << p.subtask << " rollout_end_error=" << p.rollout_end_error
              << " servo_steps=" << p.servo_steps << " converged=" << (p.servo_converged ? 1 : 0)
              << "\n";
    if (!a.out_dir.empty()) {
      char name[64];
      std::snprintf(name, sizeof name, "traj_%02zu_%s.txt", i, p.subtask.c_str());
      write_trajectory_file((fs::path(a.out_dir) / name).string(), p.trajectory);
    }
  }
  std::cout << "all_converged=" << (report.all_converged ? 1 : 0) << "\n";
  return report.all_converged ? kExitOk : kExitNumeric;
}

// --------------------------------------------------------------- rf-report

struct RfReportArgs {
  std::size_t layers = 10;
  std::size_t kernel_width = 3;
};

std::size_t probe_receptive_field(ScheduleKind kind, std::size_t layers,
                                  std::size_t kernel_width) {
  const DilationSchedule schedule = make_schedule(kind, layers);
  const std::size_t analytic = receptive_field(schedule, kernel_width);
  const std::size_t t_len = analytic + 32;
  const std::size_t dim = 4, channels = 8, classes = 3;

  std::mt19937_64 rng(7);
  StageParams stage = StageParams::init(dim, channels, classes, layers, kernel_width, rng);
  auto input = Tensor::zeros({t_len, dim}, true);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (double& v : input->values) v = unif(rng);

  ComputeTape tape;
  std::mt19937_64 unused_dropout(0);
  auto logits = stage_forward(&tape, stage, schedule, input, kernel_width, 0.0, unused_dropout,
                              false);
  auto center = ops::slice_rows(&tape, logits, t_len / 2, 1);
  auto probe = ops::sum_all(&tape, center);
  tape.backward(probe);

  std::size_t touched = 0;
  for (std::size_t t = 0; t < t_len; ++t) {
    bool any = false;
    for (std::size_t d = 0; d < dim; ++d) any = any || input->grad[t * dim + d] != 0.0;
    touched += any ? 1 : 0;
  }
  return touched;
}

int run_rf_report(const RfReportArgs& a) {
  for (const ScheduleKind kind : {ScheduleKind::fibonacci, ScheduleKind::exponential}) {
    const char* name = kind == ScheduleKind::fibonacci ? "fibonacci" : "exponential";
    const DilationSchedule schedule = make_schedule(kind, a.layers);
    std::cout << "schedule=" << name << " dilations=";
    for (std::size_t l = 0; l < schedule.layers(); ++l)
      std::cout << (l ? "," : "") << schedule.dilations[l];
    std::cout << " analytic_rf=" << receptive_field(schedule, a.kernel_width)
              << " empirical_rf=" << probe_receptive_field(kind, a.layers, a.kernel_width)
              << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sub-task segmentation and simulated execution pipeline"};
  app.require_subcommand(1);

  GenDataArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_config_option(gen_cmd);
  gen_cmd->add_option("--out", gen.out_dir, "dataset root directory")->required();
  gen_cmd->add_option("--videos-per-task", gen.split.videos_per_task, "N_t per task");
  gen_cmd->add_option("--r-val", gen.split.r_val, "holdout fraction");
  gen_cmd->add_option("--augmentations", gen.split.augmentations, "augmented copies per video");
  gen_cmd->add_option("--feature-dim", gen.gen.feature_dim, "channels per modality");
  gen_cmd->add_option("--min-duration", gen.gen.min_duration, "min frames per segment");
  gen_cmd->add_option("--max-duration", gen.gen.max_duration, "max frames per segment");
  gen_cmd->add_option("--noise", gen.gen.noise, "feature noise scale");
  gen_cmd->add_option("--aug-jitter", gen.gen.aug_jitter, "augmentation jitter scale");
  gen_cmd->add_option("--seed", gen.gen.seed, "root seed");

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "train a segmentation model");
  add_config_option(train_cmd);
  train_cmd->add_option("--manifest", train_args.manifest, "dataset manifest")->required();
  train_cmd->add_option("--run-dir", train_args.run_dir, "output run directory")->required();
  train_cmd->add_option("--mapping", train_args.mapping, "class mapping file");
  train_cmd->add_option("--transitions", train_args.transitions, "transition matrix file");
  train_cmd->add_option("--stages", train_args.model.stages, "refinement stages");
  train_cmd->add_option("--layers", train_args.model.layers, "dilated layers per stage");
  train_cmd->add_option("--kernel-width", train_args.model.kernel_width, "conv kernel width");
  train_cmd->add_option("--channels", train_args.model.channels, "hidden channels");
  train_cmd->add_option("--dropout", train_args.model.dropout, "dropout probability");
  train_cmd->add_option("--schedule", train_args.schedule_name, "fibonacci|exponential");
  train_cmd->add_option("--model-seed", train_args.model.seed, "weight init seed");
  train_cmd->add_option("--lambda", train_args.loss.lambda, "smoothness weight");
  train_cmd->add_option("--gamma", train_args.loss.gamma, "transition weight");
  train_cmd->add_option("--tau", train_args.loss.tau, "smoothness truncation");
  train_cmd->add_flag("--uniform-class-weights", train_args.uniform_class_weights,
                      "disable inverse-frequency class weighting");
  train_cmd->add_option("--eta0", train_args.train.eta0, "initial learning rate");
  train_cmd->add_option("--warmup-epochs", train_args.train.warmup_epochs, "warmup epochs");
  train_cmd->add_option("--max-epochs", train_args.train.max_epochs, "epoch budget");
  train_cmd->add_option("--batch-videos", train_args.train.batch_videos, "videos per step");
  train_cmd->add_option("--clip-norm", train_args.train.clip_norm, "global grad-norm bound");
  train_cmd->add_option("--weight-decay", train_args.train.weight_decay, "decoupled decay");
  train_cmd->add_option("--patience", train_args.train.patience, "early-stop patience");
  train_cmd->add_option("--seed", train_args.train.seed, "shuffling seed");
  train_cmd->add_option("--median-window", train_args.train.median_window,
                        "selection-metric median window");
  train_cmd->add_option("--min-run", train_args.train.min_run, "selection-metric min run length");

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score predictions against ground truth");
  add_config_option(eval_cmd);
  eval_cmd->add_option("--pred", eval_args.pred, "predicted label file(s)")->required();
  eval_cmd->add_option("--gt", eval_args.gt, "ground-truth label file(s)")->required();
  eval_cmd->add_option("--mapping", eval_args.mapping, "class mapping file")->required();
  eval_cmd->add_flag("--table", eval_args.table, "also print the human-readable table");

  InferArgs infer_args;
  CLI::App* infer_cmd = app.add_subcommand("infer", "run a checkpoint over a manifest");
  add_config_option(infer_cmd);
  infer_cmd->add_option("--checkpoint", infer_args.checkpoint, "model checkpoint")->required();
  infer_cmd->add_option("--manifest", infer_args.manifest, "dataset manifest")->required();
  infer_cmd->add_option("--out-dir", infer_args.out_dir, "prediction output directory")
      ->required();
  infer_cmd->add_option("--mapping", infer_args.mapping, "class mapping file");
  infer_cmd->add_option("--normalizer", infer_args.normalizer,
                        "channel statistics from the training run");
  infer_cmd->add_option("--median-window", infer_args.median_window, "median filter window");
  infer_cmd->add_option("--min-run", infer_args.min_run, "minimum run length");
  infer_cmd->add_flag("--no-median", infer_args.no_median, "skip the median filter");
  infer_cmd->add_flag("--no-collapse", infer_args.no_collapse, "skip short-run collapsing");

  SimExecArgs sim_args;
  CLI::App* sim_cmd =
      app.add_subcommand("simulate-exec", "plan and simulate a predicted label sequence");
  add_config_option(sim_cmd);
  sim_cmd->add_option("--labels", sim_args.labels, "predicted label file")->required();
  sim_cmd->add_option("--mapping", sim_args.mapping, "class mapping file")->required();
  sim_cmd->add_option("--out-dir", sim_args.out_dir, "plan/trajectory output directory");
  sim_cmd->add_option("--k-x", sim_args.controller.k_x, "depth gain");
  sim_cmd->add_option("--k-pz", sim_args.controller.k_pz, "lateral/vertical gain");
  sim_cmd->add_option("--d-ref", sim_args.controller.d_ref, "reference depth (m)");
  sim_cmd->add_option("--v-limit", sim_args.v_limit, "per-axis velocity limit (m/s)");
  sim_cmd->add_option("--tolerance", sim_args.tolerance, "per-axis alignment tolerance (m)");
  sim_cmd->add_option("--num-basis", sim_args.num_basis, "basis functions per primitive axis");
  sim_cmd->add_option("--dt", sim_args.dt, "integration step (s)");

  RfReportArgs rf_args;
  CLI::App* rf_cmd = app.add_subcommand("rf-report", "dilation schedules and receptive fields");
  add_config_option(rf_cmd);
  rf_cmd->add_option("--layers", rf_args.layers, "dilated layers per stage");
  rf_cmd->add_option("--kernel-width", rf_args.kernel_width, "conv kernel width");

  const std::vector<std::string> raw(argv + 1, argv + argc);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    for (CLI::App* cmd : {gen_cmd, train_cmd, eval_cmd, infer_cmd, sim_cmd, rf_cmd})
      if (cmd->parsed()) apply_flat_config(app, cmd, raw);
    if (gen_cmd->parsed()) return run_gen_data(gen);
    if (train_cmd->parsed()) return run_train(train_args);
    if (eval_cmd->parsed()) return run_eval(eval_args);
    if (infer_cmd->parsed()) return run_infer(infer_args);
    if (sim_cmd->parsed()) return run_simulate_exec(sim_args);
    if (rf_cmd->parsed()) return run_rf_report(rf_args);
    std::cerr << "no subcommand selected\n";
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const numeric_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const format_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const dimension_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}
