#pragma once

#include "toppkit/flat_recovery.hpp"
#include "toppkit/path_gen.hpp"
#include "toppkit/quad_model.hpp"

#include <span>
#include <string>

namespace toppkit::eval {

// Failures are crashes or runs that stray farther than this from the path.
inline constexpr double kFailureDeviation = 1.0;  // m

struct EvalReport {
  double max_deviation = 0.0;     // m
  double thrust_violation = 0.0;  // N
  double td_ratio = 0.0;
  bool failure = false;
  double travel_time = 0.0;   // s
  double compute_time = 0.0;  // s
  double path_length = 0.0;   // m
  double average_speed = 0.0; // m/s
};

// Distance from p to the polyline through the path stations.
double distance_to_polyline(const path::DiscretizedPath& ref_path,
                            const Vec3& p);

double max_deviation(const path::DiscretizedPath& ref_path,
                     const flat::FullTrajectory& actual);

// Mean over all (row, motor) entries of the amount outside [u_min, u_max].
double thrust_violation(std::span<const Vec4> u, double u_min, double u_max);

double td_ratio(double t_pred, double t_opt);

bool classify_failure(bool crashed, double max_deviation);

// planned supplies the commanded thrusts and travel time, actual the flown
// positions. t_opt <= 0 skips td_ratio.
EvalReport evaluate(const path::DiscretizedPath& ref_path,
                    const flat::FullTrajectory& planned,
                    const flat::FullTrajectory& actual, bool crashed,
                    const QuadModel& model, double t_opt = 0.0,
                    double compute_time = 0.0);

std::string report_to_json_text(const EvalReport& report);

}  // namespace toppkit::eval
