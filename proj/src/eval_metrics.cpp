#include "toppkit/eval_metrics.hpp"

#include "toppkit/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace toppkit::eval {

double distance_to_polyline(const path::DiscretizedPath& ref_path,
                            const Vec3& p) {
  const Vec3List& g = ref_path.gamma;
  if (g.empty()) throw InputError("max_deviation: empty reference path");
  if (g.size() == 1) return (p - g[0]).norm();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < g.size(); ++i) {
    const Vec3 d = g[i + 1] - g[i];
    const double len2 = d.squaredNorm();
    double t = len2 > 0.0 ? (p - g[i]).dot(d) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    best = std::min(best, (g[i] + t * d - p).squaredNorm());
  }
  return std::sqrt(best);
}

double max_deviation(const path::DiscretizedPath& ref_path,
                     const flat::FullTrajectory& actual) {
  if (actual.p.empty()) throw InputError("max_deviation: empty trajectory");
  double worst = 0.0;
  for (const Vec3& p : actual.p) {
    worst = std::max(worst, distance_to_polyline(ref_path, p));
  }
  return worst;
}

double thrust_violation(std::span<const Vec4> u, double u_min, double u_max) {
  if (u.empty()) return 0.0;
  double sum = 0.0;
  for (const Vec4& row : u) {
    for (int m = 0; m < 4; ++m) {
      sum += std::max(0.0, row(m) - u_max) + std::max(0.0, u_min - row(m));
    }
  }
  return sum / (4.0 * static_cast<double>(u.size()));
}

double td_ratio(double t_pred, double t_opt) {
  if (!(t_opt > 0.0)) throw InputError("td_ratio: t_opt must be > 0");
  return (t_pred - t_opt) / t_opt;
}

bool classify_failure(bool crashed, double max_deviation) {
  return crashed || !(max_deviation <= kFailureDeviation);
}

EvalReport evaluate(const path::DiscretizedPath& ref_path,
                    const flat::FullTrajectory& planned,
                    const flat::FullTrajectory& actual, bool crashed,
                    const QuadModel& model, double t_opt,
                    double compute_time) {
  if (planned.size() == 0) throw InputError("evaluate: empty plan");
  EvalReport r;
  r.max_deviation = max_deviation(ref_path, actual);
  r.thrust_violation = thrust_violation(planned.u, model.u_min, model.u_max);
  r.travel_time = planned.t.back() - planned.t.front();
  if (t_opt > 0.0) r.td_ratio = td_ratio(r.travel_time, t_opt);
  r.failure = classify_failure(crashed, r.max_deviation);
  r.compute_time = compute_time;
  r.path_length = ref_path.length();
  r.average_speed = r.travel_time > 0.0 ? r.path_length / r.travel_time : 0.0;
  return r;
}

std::string report_to_json_text(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["max_deviation"] = r.max_deviation;
  j["thrust_violation"] = r.thrust_violation;
  j["td_ratio"] = r.td_ratio;
  j["failure"] = r.failure;
  j["travel_time"] = r.travel_time;
  j["compute_time"] = r.compute_time;
  j["path_length"] = r.path_length;
  j["average_speed"] = r.average_speed;
  return j.dump(2);
}

}  // namespace toppkit::eval
