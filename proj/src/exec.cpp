#include "subseg/exec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "subseg/errors.hpp"
#include "subseg/metrics.hpp"

namespace subseg {

double phase(double t, const DmpAxisParams& p) {
  if (p.tau_c <= 0.0) throw parameter_error("dmp: phase time constant must be positive");
  return std::exp(-p.alpha_x * t / p.tau_c);
}

double forcing(double s, const DmpAxisParams& p) {
  if (p.weights.empty()) return 0.0;
  if (p.weights.size() != p.centers.size())
    throw dimension_error("dmp: weight and center counts differ");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    const double d = s - p.centers[i];
    const double psi = std::exp(-d * d / (2.0 * p.sigma2));
    num += p.weights[i] * psi;
    den += psi;
  }
  return num / std::max(den, 1e-12);
}

AxisTrack rollout_axis(const DmpAxisParams& p, double dt, double duration) {
  if (dt <= 0.0 || duration < dt)
    throw parameter_error("dmp rollout: need dt > 0 and duration >= dt");
  if (p.tau <= 0.0 || p.alpha <= 0.0 || p.beta <= 0.0)
    throw parameter_error("dmp rollout: gains and time scale must be positive");

  const std::size_t steps = static_cast<std::size_t>(std::llround(duration / dt));
  AxisTrack track;
  track.pos.reserve(steps + 1);
  track.vel.reserve(steps + 1);
  track.acc.reserve(steps + 1);

  double x = p.start, v = 0.0;
  for (std::size_t n = 0; n <= steps; ++n) {
    const double t = static_cast<double>(n) * dt;
    const double f = forcing(phase(t, p), p);
    const double a = (p.alpha * (p.beta * (p.goal - x) - p.tau * v) + f) / p.tau;
    track.pos.push_back(x);
    track.vel.push_back(v);
    track.acc.push_back(a);
    if (std::abs(x) > 1e6) {
      std::ostringstream msg;
      msg << "dmp rollout diverged (|x| > 1e6) with alpha=" << p.alpha << " beta=" << p.beta
          << " tau=" << p.tau;
      throw numeric_error(msg.str());
    }
    x += dt * v;
    v += dt * a;
  }
  return track;
}

Trajectory rollout(const Dmp3& p, double dt, double duration) {
  Trajectory tr;
  tr.dt = dt;
  for (const DmpAxisParams& ax : p.axis) tr.axes.push_back(rollout_axis(ax, dt, duration));
  return tr;
}

DmpAxisParams learn_axis_from_demo(const std::vector<double>& positions, double dt,
                                   const DmpAxisParams& skeleton, std::size_t num_basis) {
  if (num_basis < 1) throw parameter_error("dmp learning: need at least one basis");
  if (positions.size() < num_basis + 2)
    throw usage_error("dmp learning: demo must provide at least N+2 samples");
  if (dt <= 0.0) throw usage_error("dmp learning: demo has zero duration");
  const std::size_t t_len = positions.size();

  DmpAxisParams p = skeleton;
  p.start = positions.front();
  p.goal = positions.back();
  p.tau_c = static_cast<double>(t_len - 1) * dt;

  // Central-difference velocity/acceleration (one-sided at the ends).
  std::vector<double> vel(t_len), acc(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    if (t == 0)
      vel[t] = (positions[1] - positions[0]) / dt;
    else if (t + 1 == t_len)
      vel[t] = (positions[t] - positions[t - 1]) / dt;
    else
      vel[t] = (positions[t + 1] - positions[t - 1]) / (2.0 * dt);
  }
  for (std::size_t t = 0; t < t_len; ++t) {
    if (t == 0)
      acc[t] = (vel[1] - vel[0]) / dt;
    else if (t + 1 == t_len)
      acc[t] = (vel[t] - vel[t - 1]) / dt;
    else
      acc[t] = (vel[t + 1] - vel[t - 1]) / (2.0 * dt);
  }
  for (std::size_t t = 0; t < t_len; ++t)
    if (!std::isfinite(vel[t]) || !std::isfinite(acc[t]))
      throw numeric_error("dmp learning: non-finite demo derivatives");

  // Exponentially spaced centers track the phase decay over the demo.
  p.centers.resize(num_basis);
  for (std::size_t i = 0; i < num_basis; ++i) {
    const double frac = num_basis == 1 ? 0.0 : static_cast<double>(i) / (num_basis - 1.0);
    p.centers[i] = std::exp(-p.alpha_x * frac);
  }
  // Width so adjacent bases intersect near half activation (mean gap).
  double gap_sum = 0.0;
  for (std::size_t i = 1; i < num_basis; ++i) gap_sum += p.centers[i - 1] - p.centers[i];
  const double mean_gap = num_basis > 1 ? gap_sum / (num_basis - 1.0) : 1.0;
  p.sigma2 = std::max(mean_gap * mean_gap / (8.0 * std::log(2.0)), 1e-12);

  // The mixture output is sum_i w_i * phi_i(s) with phi the normalized
  // activations, so each w_i is fitted by its own least-squares subproblem
  // localized by phi_i. A single pass leaves visible bias where the shared
  // width over- or under-laps the geometric center spacing; cycling the
  // per-basis fits over the residual a fixed number of times removes it.
  std::vector<double> resid(t_len);
  std::vector<double> act(t_len * num_basis);
  for (std::size_t t = 0; t < t_len; ++t) {
    const double s = phase(static_cast<double>(t) * dt, p);
    resid[t] = p.tau * acc[t] - p.alpha * (p.beta * (p.goal - positions[t]) - p.tau * vel[t]);
    double den = 0.0;
    for (std::size_t i = 0; i < num_basis; ++i) {
      const double d = s - p.centers[i];
      act[t * num_basis + i] = std::exp(-d * d / (2.0 * p.sigma2));
      den += act[t * num_basis + i];
    }
    for (std::size_t i = 0; i < num_basis; ++i) act[t * num_basis + i] /= std::max(den, 1e-12);
  }
  p.weights.assign(num_basis, 0.0);
  constexpr int kFitPasses = 10;
  for (int pass = 0; pass < kFitPasses; ++pass) {
    for (std::size_t i = 0; i < num_basis; ++i) {
      double num = 0.0, den = 0.0;
      for (std::size_t t = 0; t < t_len; ++t) {
        const double phi = act[t * num_basis + i];
        num += phi * resid[t];
        den += phi * phi;
      }
      const double dw = num / std::max(den, 1e-12);
      p.weights[i] += dw;
      for (std::size_t t = 0; t < t_len; ++t) resid[t] -= dw * act[t * num_basis + i];
    }
  }
  return p;
}

namespace {

double clamp_mag(double v, double limit) { return std::clamp(v, -limit, limit); }

}  // namespace

Vec3 controller_step(double depth, double e_y, double e_z, const ControllerConfig& cfg) {
  if (cfg.k_x <= 0.0 || cfg.k_pz <= 0.0)
    throw parameter_error("controller: gains must be positive");
  Vec3 v;
  const double e_x = depth - cfg.d_ref;
  v.x = std::abs(e_x) <= cfg.tolerance.x ? 0.0 : clamp_mag(cfg.k_x * e_x, cfg.v_limit.x);
  v.y = std::abs(e_y) <= cfg.tolerance.y ? 0.0 : clamp_mag(cfg.k_pz * e_y, cfg.v_limit.y);
  v.z = std::abs(e_z) <= cfg.tolerance.z ? 0.0 : clamp_mag(cfg.k_pz * e_z, cfg.v_limit.z);
  return v;
}

ServoResult servo_until_aligned(const Vec3& initial, const Vec3& target,
                                const ControllerConfig& cfg, double dt, std::size_t max_steps) {
  if (dt <= 0.0) throw parameter_error("servo: dt must be positive");
  // The simulated object sits d_ref beyond the target pose along x, so the
  // measured depth reads d_ref exactly when the end effector is on target.
  const double object_x = target.x + cfg.d_ref;

  ServoResult r;
  r.final_pose = initial;
  for (std::size_t step = 0; step <= max_steps; ++step) {
    const double depth = object_x - r.final_pose.x;
    const double e_y = target.y - r.final_pose.y;
    const double e_z = target.z - r.final_pose.z;
    if (std::abs(depth - cfg.d_ref) <= cfg.tolerance.x && std::abs(e_y) <= cfg.tolerance.y &&
        std::abs(e_z) <= cfg.tolerance.z) {
      r.converged = true;
      r.steps = step;
      return r;
    }
    if (step == max_steps) break;
    const Vec3 v = controller_step(depth, e_y, e_z, cfg);
    r.final_pose.x += v.x * dt;
    r.final_pose.y += v.y * dt;
    r.final_pose.z += v.z * dt;
  }
  r.converged = false;
  r.steps = max_steps;
  return r;
}

std::map<std::string, Vec3> default_goal_table() {
  return {
      {"reach", {0.45, 0.00, 0.15}}, {"pick", {0.45, 0.00, 0.05}},
      {"move", {0.30, 0.20, 0.20}},  {"pour", {0.30, 0.25, 0.25}},
      {"give", {0.50, -0.30, 0.30}}, {"place", {0.30, 0.20, 0.05}},
      {"wipe", {0.40, 0.10, 0.02}},  {"retract", {0.00, 0.00, 0.40}},
  };
}

PrimitivePlan plan_from_transcript(const std::vector<std::string>& transcript,
                                   const TaskGrammar& grammar,
                                   const std::map<std::string, Vec3>& goals) {
  if (transcript.empty()) throw usage_error("plan: empty transcript");

  // Name -> id over the union of transcript and grammar symbols, for the
  // edit-distance diagnostic when no task matches exactly.
  std::map<std::string, std::size_t> symbol_ids;
  const auto symbol = [&symbol_ids](const std::string& s) {
    return symbol_ids.emplace(s, symbol_ids.size()).first->second;
  };
  std::vector<std::size_t> got;
  for (const std::string& s : transcript) got.push_back(symbol(s));

  std::string nearest;
  std::size_t nearest_distance = std::numeric_limits<std::size_t>::max();
  for (const auto& [task, seq] : grammar.tasks()) {
    if (seq == transcript) {
      PrimitivePlan plan;
      plan.task = task;
      for (const std::string& sub : seq) {
        auto it = goals.find(sub);
        if (it == goals.end())
          throw config_error("plan: no goal pose configured for sub-task '" + sub + "'");
        plan.steps.push_back(PlanStep{sub, it->second});
      }
      return plan;
    }
    std::vector<std::size_t> want;
    for (const std::string& s : seq) want.push_back(symbol(s));
    const std::size_t d = levenshtein_distance(got, want);
    if (d < nearest_distance) {
      nearest_distance = d;
      nearest = task;
    }
  }
  throw lookup_error("plan: transcript matches no task; nearest is '" + nearest +
                     "' at edit distance " + std::to_string(nearest_distance));
}

namespace {

// Smooth point-to-point profile with zero end velocities/accelerations.
std::vector<double> min_jerk(double from, double to, std::size_t samples) {
  std::vector<double> out(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(samples - 1);
    const double shape = u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
    out[i] = from + (to - from) * shape;
  }
  return out;
}

}  // namespace

std::map<std::string, Dmp3> build_dmp_library(const ClassVocabulary& vocab,
                                              const std::map<std::string, Vec3>& goals,
                                              std::size_t num_basis) {
  const double dt = 1e-3;
  const std::size_t samples = 1001;  // 1 s demos
  std::map<std::string, Dmp3> lib;
  for (const std::string& name : vocab.names()) {
    auto it = goals.find(name);
    if (it == goals.end())
      throw config_error("dmp library: no goal pose configured for sub-task '" + name + "'");
    const double targets[3] = {it->second.x, it->second.y, it->second.z};
    Dmp3 dmp;
    for (std::size_t ax = 0; ax < 3; ++ax) {
      const std::vector<double> demo = min_jerk(0.0, targets[ax], samples);
      dmp.axis[ax] = learn_axis_from_demo(demo, dt, DmpAxisParams{}, num_basis);
    }
    lib[name] = dmp;
  }
  return lib;
}

ExecutionReport simulate_execution(const LabelSequence& predicted, const ClassVocabulary& vocab,
                                   const TaskGrammar& grammar,
                                   const std::map<std::string, Vec3>& goals,
                                   const std::map<std::string, Dmp3>& library,
                                   const ControllerConfig& controller, double dt) {
  std::vector<std::string> transcript;
  for (const Segment& seg : to_segments(predicted)) transcript.push_back(vocab.name(seg.cls));
  const PrimitivePlan plan = plan_from_transcript(transcript, grammar, goals);

  ExecutionReport report;
  report.task = plan.task;
  Vec3 pose;  // home position: origin
  bool all_ok = true;
  for (const PlanStep& step : plan.steps) {
    auto it = library.find(step.subtask);
    if (it == library.end())
      throw config_error("execution: no primitive learned for sub-task '" + step.subtask + "'");

    // Retarget the learned primitive to the current pose and the plan goal.
    Dmp3 dmp = it->second;
    const double starts[3] = {pose.x, pose.y, pose.z};
    const double targets[3] = {step.goal.x, step.goal.y, step.goal.z};
    double duration = 0.0;
    for (std::size_t ax = 0; ax < 3; ++ax) {
      dmp.axis[ax].start = starts[ax];
      dmp.axis[ax].goal = targets[ax];
      duration = std::max(duration, 1.5 * dmp.axis[ax].tau_c);
    }

    PrimitiveResult res;
    res.subtask = step.subtask;
    res.goal = step.goal;
    res.trajectory = rollout(dmp, dt, duration);
    pose.x = res.trajectory.axes[0].pos.back();
    pose.y = res.trajectory.axes[1].pos.back();
    pose.z = res.trajectory.axes[2].pos.back();
    res.rollout_end_error = std::sqrt((pose.x - step.goal.x) * (pose.x - step.goal.x) +
                                      (pose.y - step.goal.y) * (pose.y - step.goal.y) +
                                      (pose.z - step.goal.z) * (pose.z - step.goal.z));

    const ServoResult servo = servo_until_aligned(pose, step.goal, controller, 1e-2, 100000);
    res.servo_steps = servo.steps;
    res.servo_converged = servo.converged;
    pose = servo.final_pose;
    all_ok = all_ok && servo.converged;
    report.primitives.push_back(std::move(res));
  }
  report.all_converged = all_ok;
  return report;
}

void write_trajectory_file(const std::string& path, const Trajectory& trajectory) {
  if (trajectory.axes.size() != 3)
    throw dimension_error("trajectory dump: expected three axes");
  std::ofstream out(path);
  if (!out) throw format_error("cannot open trajectory file '" + path + "' for writing", 0);
  out.precision(9);
  for (std::size_t i = 0; i < trajectory.samples(); ++i) {
    out << static_cast<double>(i) * trajectory.dt;
    for (const AxisTrack& ax : trajectory.axes) out << ' ' << ax.pos[i];
    for (const AxisTrack& ax : trajectory.axes) out << ' ' << ax.vel[i];
    out << "\n";
  }
  if (!out) throw format_error("failed writing trajectory file '" + path + "'", 0);
}

void write_plan_file(const std::string& path, const PrimitivePlan& plan) {
  std::ofstream out(path);
  if (!out) throw format_error("cannot open plan file '" + path + "' for writing", 0);
  out.precision(9);
  for (const PlanStep& s : plan.steps)
    out << s.subtask << '\t' << s.goal.x << '\t' << s.goal.y << '\t' << s.goal.z << "\n";
  if (!out) throw format_error("failed writing plan file '" + path + "'", 0);
}

}  // namespace subseg
