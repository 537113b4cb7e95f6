#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "subseg/data.hpp"
#include "subseg/labels.hpp"

namespace subseg {

// Second-order attractor with a phase-driven forcing term, one Cartesian
// axis: tau * x'' = alpha * (beta * (goal - x) - tau * x') + f(s).
struct DmpAxisParams {
  double alpha = 25.0;
  double beta = 6.25;  // alpha / 4: critically damped, no overshoot
  double tau = 1.0;
  double alpha_x = 4.605170185988091;  // ln(100): phase sweeps 1 -> 0.01 over tau_c
  double tau_c = 1.0;
  double start = 0.0;
  double goal = 0.0;
  std::vector<double> weights;  // empty = zero forcing
  std::vector<double> centers;  // strictly decreasing, in (0, 1]
  double sigma2 = 1e-2;         // shared basis width
};

struct Dmp3 {
  std::array<DmpAxisParams, 3> axis;
};

// Phase clock s(t) = exp(-alpha_x * t / tau_c); s(0) = 1, decreasing.
double phase(double t, const DmpAxisParams& p);

// Normalized radial-basis mixture f(s) = sum w_i psi_i / sum psi_i with the
// denominator floored at 1e-12. Zero when no weights are configured.
double forcing(double s, const DmpAxisParams& p);

struct AxisTrack {
  std::vector<double> pos, vel, acc;
};

struct Trajectory {
  double dt = 1e-3;
  std::vector<AxisTrack> axes;

  std::size_t samples() const { return axes.empty() ? 0 : axes.front().pos.size(); }
};

// Explicit-Euler integration from (start, 0 velocity) over the duration.
// Throws numeric_error (naming the gains) if the state exceeds 1e6.
AxisTrack rollout_axis(const DmpAxisParams& p, double dt, double duration);
Trajectory rollout(const Dmp3& p, double dt, double duration);

// Fits basis weights so the rollout reproduces the demonstrated positions:
// the target forcing is recovered from the demo derivatives (central
// differences) and regressed per basis with locally weighted least squares.
// Sets start/goal/tau_c from the demo; centers spaced along the phase decay.
DmpAxisParams learn_axis_from_demo(const std::vector<double>& positions, double dt,
                                   const DmpAxisParams& skeleton, std::size_t num_basis);

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

struct ControllerConfig {
  double k_x = 1.0;    // depth gain
  double k_pz = 1.0;   // lateral/vertical gain
  double d_ref = 0.5;  // reference approach depth, metres
  Vec3 v_limit{0.25, 0.25, 0.25};
  Vec3 tolerance{1e-3, 1e-3, 1e-3};
};

// Velocity command toward the measured depth / lateral errors. Axes whose
// error magnitude is inside the tolerance band command exactly 0.
Vec3 controller_step(double depth, double e_y, double e_z, const ControllerConfig& cfg);

struct ServoResult {
  bool converged = false;
  std::size_t steps = 0;
  Vec3 final_pose;
};

// Ideal-kinematics servo loop: the pose integrates the commanded velocity
// exactly. The object sits at d_ref beyond the target pose along x, so
// convergence leaves the end effector at `target`.
ServoResult servo_until_aligned(const Vec3& initial, const Vec3& target,
                                const ControllerConfig& cfg, double dt, std::size_t max_steps);

struct PlanStep {
  std::string subtask;
  Vec3 goal;
};

struct PrimitivePlan {
  std::string task;
  std::vector<PlanStep> steps;
};

// Desk-scale goal pose per sub-task (stands in for object detection).
std::map<std::string, Vec3> default_goal_table();

// Matches the transcript exactly against a grammar task; on failure throws
// lookup_error naming the nearest task by transcript edit distance.
PrimitivePlan plan_from_transcript(const std::vector<std::string>& transcript,
                                   const TaskGrammar& grammar,
                                   const std::map<std::string, Vec3>& goals);

// Per-sub-task movement primitives learned from smooth synthetic
// demonstrations; retargeted to new start/goal at execution time.
std::map<std::string, Dmp3> build_dmp_library(const ClassVocabulary& vocab,
                                              const std::map<std::string, Vec3>& goals,
                                              std::size_t num_basis);

struct PrimitiveResult {
  std::string subtask;
  Vec3 goal;
  double rollout_end_error = 0.0;  // Euclidean gap after the DMP rollout
  std::size_t servo_steps = 0;
  bool servo_converged = false;
  Trajectory trajectory;
};

struct ExecutionReport {
  std::string task;
  std::vector<PrimitiveResult> primitives;
  bool all_converged = false;
};

// Full simulated execution of a predicted label sequence: plan, then per
// primitive a DMP rollout followed by servo alignment.
ExecutionReport simulate_execution(const LabelSequence& predicted, const ClassVocabulary& vocab,
                                   const TaskGrammar& grammar,
                                   const std::map<std::string, Vec3>& goals,
                                   const std::map<std::string, Dmp3>& library,
                                   const ControllerConfig& controller, double dt);

// "t x y z vx vy vz" per line.
void write_trajectory_file(const std::string& path, const Trajectory& trajectory);
// "subtask<TAB>gx<TAB>gy<TAB>gz" per line.
void write_plan_file(const std::string& path, const PrimitivePlan& plan);

}  // namespace subseg
