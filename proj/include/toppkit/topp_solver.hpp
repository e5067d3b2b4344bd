#pragma once

#include "toppkit/flat_recovery.hpp"
#include "toppkit/path_gen.hpp"
#include "toppkit/quad_model.hpp"

#include <numbers>
#include <optional>
#include <vector>

// Reference time-optimal path parameterization over the reduced flat
// variables (h, yaw) of a discretized path. Objective:
//   T + lambda * sum_i |alpha_i|^2,  T = sum_i 2 ds / (sqrt(h_i) + sqrt(h_i+1))
// subject to h <= v_max^2, |a_i| <= a_max, |omega_i| <= omega_max, per-motor
// thrust bounds and yaw_0 in [theta0_min, theta0_max], all evaluated through
// the flat recovery chain.
namespace toppkit::topp {

inline constexpr double kDefaultLambda = 1e-4;

struct BoundarySpeeds {
  double start = 0.0;  // m/s
  double end = 0.0;    // m/s
};

struct ToppProblem {
  path::DiscretizedPath path;
  QuadModel model;
  double lambda = kDefaultLambda;
  BoundarySpeeds boundary;
  double theta0_min = 0.0;
  double theta0_max = 0.5 * std::numbers::pi;

  void validate() const;
};

struct SolverOptions {
  double tolerance = 1e-4;          // max constraint violation, native units
  int max_outer = 30;
  int max_inner = 500;              // inner iterations per outer step
  double fd_step = 1e-6;            // forward-difference step in h and yaw
  double initial_penalty = 10.0;
  double max_penalty = 1e8;
  // Fraction of the collective-thrust acceleration margin used by the
  // initializer's acceleration bound.
  double init_thrust_fraction = 0.75;
  // Weight of the quadratic pull of yaw toward its value at the start of each
  // inner solve.
  double yaw_proximal = 1e-3;
  bool record_merit = false;
  std::optional<flat::SpeedYawProfile> initial_guess;
};

struct Diagnostics {
  int iterations = 0;        // total inner iterations
  int outer_iterations = 0;
  double max_violation = 0.0;
  bool converged = false;
  // Merit values of accepted inner iterates, one list per outer step (only
  // filled with SolverOptions::record_merit).
  std::vector<std::vector<double>> merit_history;
};

struct ToppSolution {
  flat::SpeedYawProfile profile;
  double T = 0.0;
  double objective = 0.0;
  Diagnostics diagnostics;
};

// Maximal h under v_max and the acceleration bound |1/2 g' h' + g'' h| <=
// a_bound (forward/backward passes), yaw constant at the midpoint of the
// starting range. Per-motor limits are ignored.
flat::SpeedYawProfile solve_convex_init(const ToppProblem& problem,
                                        double init_thrust_fraction = 0.75);

ToppSolution solve_topp(const ToppProblem& problem,
                        const SolverOptions& options = {});

struct ConstraintAudit {
  double T = 0.0;
  double penalty = 0.0;      // sum_i |alpha_i|^2
  double objective = 0.0;    // T + lambda * penalty
  double speed = 0.0;        // max(0, |v| - v_max), m/s
  double accel = 0.0;        // m/s^2
  double omega = 0.0;        // rad/s
  double thrust = 0.0;       // N
  double yaw0 = 0.0;         // rad
  double max_violation() const;
};

// Objective and constraint violations of a profile, computed through
// flat::recover_trajectory.
ConstraintAudit audit_profile(const ToppProblem& problem,
                              const flat::SpeedYawProfile& profile);

// Nominal / perturbed path pair for the yaw-consistency experiment.
struct PathPair {
  path::DiscretizedPath nominal;
  path::DiscretizedPath perturbed;
};

struct PairDelta {
  double dh_max = 0.0;    // max_i |h_nom - h_pert|
  double dT = 0.0;        // |T_nom - T_pert|
  double dT_rel = 0.0;    // dT / T_nom
  double dyaw_max = 0.0;  // max_i |yaw_nom - yaw_pert|
};

struct ConsistencyStats {
  double lambda = 0.0;
  std::vector<PairDelta> pairs;  // converged pairs only
  std::vector<std::size_t> pair_index;
  int failures = 0;
};

struct ConsistencyResult {
  ConsistencyStats without_penalty;  // lambda = 0
  ConsistencyStats with_penalty;     // lambda = penalty_lambda
};

ConsistencyResult yaw_consistency_penalty_effect(
    const std::vector<PathPair>& pairs, const QuadModel& model,
    double penalty_lambda = kDefaultLambda, const SolverOptions& options = {});

}  // namespace toppkit::topp
