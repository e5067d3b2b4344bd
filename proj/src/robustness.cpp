#include "toppkit/robustness.hpp"

#include "toppkit/errors.hpp"
#include "toppkit/eval_metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace toppkit::robust {

using nlohmann::json;

void ReachTolerance::validate() const {
  if (!(pos_tol > 0.0) || !(vel_tol > 0.0) || !(att_tol > 0.0) ||
      !(rate_tol > 0.0)) {
    throw InputError("reach tolerances must be strictly positive");
  }
}

ReachTolerance tolerance_from_json_text(const std::string& text) {
  ReachTolerance tol;
  try {
    const json j = json::parse(text);
    if (j.contains("pos_tol")) tol.pos_tol = j["pos_tol"].get<double>();
    if (j.contains("vel_tol")) tol.vel_tol = j["vel_tol"].get<double>();
    if (j.contains("att_tol")) tol.att_tol = j["att_tol"].get<double>();
    if (j.contains("rate_tol")) tol.rate_tol = j["rate_tol"].get<double>();
  } catch (const json::exception& e) {
    throw InputError(std::string("reach tolerance: ") + e.what());
  }
  tol.validate();
  return tol;
}

ReachTolerance load_tolerance(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw InputError("cannot open tolerance file: " + file);
  std::stringstream buf;
  buf << in.rdbuf();
  return tolerance_from_json_text(buf.str());
}

std::string tolerance_to_json_text(const ReachTolerance& tol) {
  nlohmann::ordered_json j;
  j["pos_tol"] = tol.pos_tol;
  j["vel_tol"] = tol.vel_tol;
  j["att_tol"] = tol.att_tol;
  j["rate_tol"] = tol.rate_tol;
  return j.dump(2);
}

namespace {

bool within(const sim::QuadState& s, const sim::ReferencePoint& t,
            const ReachTolerance& tol) {
  return (s.p - t.p).norm() <= tol.pos_tol &&
         (s.v - t.v).norm() <= tol.vel_tol &&
         flat::attitude_distance(s.q, t.q) <= tol.att_tol &&
         (s.omega - t.omega).norm() <= tol.rate_tol;
}

}  // namespace

bool reach_check(const sim::QuadState& x0, const sim::ReferencePoint& target,
                 double dt_budget, const ReachTolerance& tol,
                 const sim::ControllerGains& gains, const QuadModel& model,
                 const ReachOptions& options) {
  if (!(dt_budget >= 0.0)) throw InputError("reach_check: dt_budget < 0");
  if (!(options.dt > 0.0)) throw InputError("reach_check: dt must be > 0");
  tol.validate();
  if (within(x0, target, tol)) return true;
  const auto steps = static_cast<long>(std::floor(dt_budget / options.dt + 1e-9));
  sim::QuadState s = x0;
  try {
    for (long k = 1; k <= steps; ++k) {
      const Vec4 u = sim::se3_control(s, target, gains, model);
      s = sim::step_dynamics(s, u, options.dt, model, k);
      if (within(s, target, tol)) return true;
    }
  } catch (const SimulationFault&) {
    return false;
  }
  return false;
}

std::vector<bool> in_brt_steps(const flat::FullTrajectory& planned,
                               const flat::FullTrajectory& simulated,
                               const ReachTolerance& tol,
                               const sim::ControllerGains& gains,
                               const QuadModel& model,
                               const ReachOptions& options) {
  const std::size_t n = planned.size();
  if (n < 2) throw InputError("in_brt: planned trajectory needs >= 2 rows");
  const std::size_t m = simulated.size();
  if (m == 0 || m > n) throw InputError("in_brt: mismatched grids");
  for (std::size_t i = 0; i < m; ++i) {
    if (std::abs(planned.t[i] - simulated.t[i]) >
        1e-9 * std::max(1.0, std::abs(planned.t[i]))) {
      throw InputError("in_brt: mismatched grids");
    }
  }
  std::vector<bool> ok(n - 1, false);
  for (std::size_t i = 0; i + 1 < n && i < m; ++i) {
    const double budget = planned.t[i + 1] - planned.t[i];
    ok[i] = reach_check(sim::state_row(simulated, i),
                        sim::reference_row(planned, i + 1), budget, tol, gains,
                        model, options);
  }
  return ok;
}

double in_brt_probability(const flat::FullTrajectory& planned,
                          const flat::FullTrajectory& simulated,
                          const ReachTolerance& tol,
                          const sim::ControllerGains& gains,
                          const QuadModel& model,
                          const ReachOptions& options) {
  const std::vector<bool> ok =
      in_brt_steps(planned, simulated, tol, gains, model, options);
  return static_cast<double>(std::count(ok.begin(), ok.end(), true)) /
         static_cast<double>(ok.size());
}

double output_variation(const std::vector<ProfilePair>& pairs) {
  if (pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const ProfilePair& p : pairs) {
    const auto& a = p.nominal;
    const auto& b = p.perturbed;
    if (a.h.size() != b.h.size() || a.cos_yaw.size() != b.cos_yaw.size() ||
        a.h.size() != a.cos_yaw.size()) {
      throw InputError("output_variation: profile length mismatch");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.h.size(); ++i) {
      worst = std::max({worst, std::abs(a.h[i] - b.h[i]),
                        std::abs(a.cos_yaw[i] - b.cos_yaw[i])});
    }
    sum += worst;
  }
  return sum / static_cast<double>(pairs.size());
}

RobustnessReport epsilon_robustness(const path::WaypointList& waypoints,
                                    const Planner& planner,
                                    const path::PerturbationSpec& spec,
                                    const ReachTolerance& tol,
                                    const QuadModel& model,
                                    const RobustnessOptions& options) {
  spec.validate();
  tol.validate();
  const std::vector<double> durations = path::allocate_times(waypoints);
  const path::DiscretizedPath nominal = path::discretize_arclength(
      path::fit_min_snap(waypoints, durations), options.n_stations);
  const flat::SpeedYawProfile nominal_profile = planner(nominal);
  const double t_nominal =
      flat::traversal_time(nominal_profile.h, nominal.ds).total;

  std::vector<path::DiscretizedPath> paths;
  if (spec.epsilon == 0.0) {
    paths.assign(static_cast<std::size_t>(spec.n_samples), nominal);
  } else {
    for (auto& p :
         path::perturb_path(waypoints, durations, spec, options.n_stations)) {
      paths.push_back(std::move(p.path));
    }
  }

  RobustnessReport rep;
  rep.epsilon = spec.epsilon;
  rep.samples = static_cast<int>(paths.size());
  std::vector<ProfilePair> profile_pairs;
  int failures = 0;
  double dev_sum = 0.0, td_sum = 0.0;
  for (const path::DiscretizedPath& p : paths) {
    SampleReport sr;
    try {
      const flat::SpeedYawProfile prof = planner(p);
      const flat::FullTrajectory plan = flat::recover_trajectory(p, prof, model);
      const sim::SimResult run =
          sim::simulate_tracking(plan, options.gains, model, options.sim_dt);
      sr.crashed = run.crashed;
      sr.per_step_in_brt =
          in_brt_steps(plan, run.actual, tol, options.gains, model,
                       options.reach);
      sr.in_brt_probability =
          static_cast<double>(std::count(sr.per_step_in_brt.begin(),
                                         sr.per_step_in_brt.end(), true)) /
          static_cast<double>(sr.per_step_in_brt.size());
      sr.max_deviation = eval::max_deviation(p, run.actual);
      sr.travel_time = plan.t.back();
      if (t_nominal > 0.0) sr.td_ratio = eval::td_ratio(sr.travel_time, t_nominal);
      const ProfilePair pair{nominal_profile, prof};
      sr.output_variation = output_variation({pair});
      profile_pairs.push_back(pair);
    } catch (const Error& e) {
      sr.failed = true;
      sr.error = e.what();
    }
    if (sr.failed) {
      ++rep.failed_samples;
      ++failures;
    } else {
      if (sr.crashed) ++rep.crashed_samples;
      if (eval::classify_failure(sr.crashed, sr.max_deviation)) ++failures;
      rep.per_step_in_brt.insert(rep.per_step_in_brt.end(),
                                 sr.per_step_in_brt.begin(),
                                 sr.per_step_in_brt.end());
      dev_sum += sr.max_deviation;
      td_sum += sr.td_ratio;
    }
    rep.sample_reports.push_back(std::move(sr));
  }
  const int ok = rep.samples - rep.failed_samples;
  if (!rep.per_step_in_brt.empty()) {
    rep.in_brt_probability =
        static_cast<double>(std::count(rep.per_step_in_brt.begin(),
                                       rep.per_step_in_brt.end(), true)) /
        static_cast<double>(rep.per_step_in_brt.size());
  }
  if (ok > 0) {
    rep.max_deviation = dev_sum / ok;
    rep.td_ratio = td_sum / ok;
  }
  rep.output_variation = output_variation(profile_pairs);
  rep.failure_rate =
      rep.samples > 0 ? static_cast<double>(failures) / rep.samples : 0.0;
  return rep;
}

std::string report_to_json_text(const RobustnessReport& r) {
  nlohmann::ordered_json j;
  j["epsilon"] = r.epsilon;
  j["per_step_in_brt"] = r.per_step_in_brt;
  j["in_brt_probability"] = r.in_brt_probability;
  j["output_variation"] = r.output_variation;
  j["max_deviation"] = r.max_deviation;
  j["td_ratio"] = r.td_ratio;
  j["samples"] = r.samples;
  j["failed_samples"] = r.failed_samples;
  j["crashed_samples"] = r.crashed_samples;
  j["failure_rate"] = r.failure_rate;
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (const SampleReport& s : r.sample_reports) {
    nlohmann::ordered_json e;
    e["failed"] = s.failed;
    if (s.failed) e["error"] = s.error;
    e["crashed"] = s.crashed;
    e["in_brt_probability"] = s.in_brt_probability;
    e["max_deviation"] = s.max_deviation;
    e["travel_time"] = s.travel_time;
    e["td_ratio"] = s.td_ratio;
    e["output_variation"] = s.output_variation;
    per.push_back(e);
  }
  j["sample_reports"] = per;
  return j.dump(2);
}

}  // namespace toppkit::robust
