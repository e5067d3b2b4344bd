#pragma once

#include "toppkit/flat_recovery.hpp"
#include "toppkit/path_gen.hpp"
#include "toppkit/quad_model.hpp"
#include "toppkit/sim_control.hpp"

#include <functional>
#include <string>
#include <vector>

// Sampling-based reachability checks between consecutive trajectory states
// and the perturbation experiments built on them.
namespace toppkit::robust {

struct ReachTolerance {
  double pos_tol = 0.05;   // m
  double vel_tol = 0.25;   // m/s
  double att_tol = 0.2;    // rad, geodesic
  double rate_tol = 1.0;   // rad/s

  void validate() const;
};

ReachTolerance load_tolerance(const std::string& file);
ReachTolerance tolerance_from_json_text(const std::string& text);
std::string tolerance_to_json_text(const ReachTolerance& tol);

struct ReachOptions {
  double dt = sim::kDefaultDt;
};

// Regulates toward a constant target row from x0 and samples the error at
// k * dt for k = 0 .. floor(dt_budget / dt). True as soon as all four error
// components are inside tol at once. A simulation fault gives false.
bool reach_check(const sim::QuadState& x0, const sim::ReferencePoint& target,
                 double dt_budget, const ReachTolerance& tol,
                 const sim::ControllerGains& gains, const QuadModel& model,
                 const ReachOptions& options = {});

// Step i checks simulated row i against planned row i + 1 with budget
// t_{i+1} - t_i of the plan. Rows must share timestamps; a simulated run cut
// short by a crash marks the missing steps false.
std::vector<bool> in_brt_steps(const flat::FullTrajectory& planned,
                               const flat::FullTrajectory& simulated,
                               const ReachTolerance& tol,
                               const sim::ControllerGains& gains,
                               const QuadModel& model,
                               const ReachOptions& options = {});

double in_brt_probability(const flat::FullTrajectory& planned,
                          const flat::FullTrajectory& simulated,
                          const ReachTolerance& tol,
                          const sim::ControllerGains& gains,
                          const QuadModel& model,
                          const ReachOptions& options = {});

struct ProfilePair {
  flat::SpeedYawProfile nominal;
  flat::SpeedYawProfile perturbed;
};

// Mean over pairs of max_i max(|dh_i|, |dcos_yaw_i|).
double output_variation(const std::vector<ProfilePair>& pairs);

using Planner =
    std::function<flat::SpeedYawProfile(const path::DiscretizedPath&)>;

struct SampleReport {
  bool failed = false;  // planner or recovery error
  std::string error;
  bool crashed = false;
  std::vector<bool> per_step_in_brt;
  double in_brt_probability = 0.0;
  double max_deviation = 0.0;
  double travel_time = 0.0;
  double td_ratio = 0.0;
  double output_variation = 0.0;
};

struct RobustnessReport {
  double epsilon = 0.0;
  // Concatenated over successful samples, in sample order.
  std::vector<bool> per_step_in_brt;
  double in_brt_probability = 0.0;
  double output_variation = 0.0;
  double max_deviation = 0.0;  // mean over successful samples
  double td_ratio = 0.0;       // mean over successful samples
  int samples = 0;
  int failed_samples = 0;
  int crashed_samples = 0;
  double failure_rate = 0.0;
  std::vector<SampleReport> sample_reports;
};

struct RobustnessOptions {
  int n_stations = path::kDefaultSamples;
  sim::ControllerGains gains;
  double sim_dt = sim::kDefaultDt;
  ReachOptions reach;
};

// Plans the nominal path once, then each perturbed copy (epsilon = 0 uses the
// nominal path itself), recovers, simulates and scores it. td_ratio compares
// each sample's travel time with the nominal plan.
RobustnessReport epsilon_robustness(const path::WaypointList& waypoints,
                                    const Planner& planner,
                                    const path::PerturbationSpec& spec,
                                    const ReachTolerance& tol,
                                    const QuadModel& model,
                                    const RobustnessOptions& options = {});

std::string report_to_json_text(const RobustnessReport& report);

}  // namespace toppkit::robust
