#pragma once

#include "toppkit/types.hpp"

#include <cstdint>
#include <vector>

// Geometric path generation: minimum-snap piecewise polynomials through
// waypoints, uniform arc-length discretization, and waypoint perturbation
// families used by the robustness analysis.
namespace toppkit::path {

inline constexpr int kPolyOrder = 7;
inline constexpr int kNumCoeffs = kPolyOrder + 1;

// Duration given to segments whose endpoints coincide.
inline constexpr double kMinSegmentDuration = 0.1;

inline constexpr double kDefaultNominalSpeed = 1.0;
inline constexpr int kDefaultSamples = 100;

struct WaypointList {
  Vec3List points;

  std::size_t size() const { return points.size(); }
};

// Coefficients are stored per segment in normalized time: column k of a
// segment matrix multiplies (t / T)^k, where T is that segment's duration.
using SegmentCoeffs = Eigen::Matrix<double, 3, kNumCoeffs>;

class PiecewisePolyPath {
 public:
  PiecewisePolyPath() = default;
  PiecewisePolyPath(std::vector<SegmentCoeffs> segments,
                    std::vector<double> durations);

  std::size_t segment_count() const { return segments_.size(); }
  const std::vector<SegmentCoeffs>& segments() const { return segments_; }
  const std::vector<double>& durations() const { return durations_; }
  double total_duration() const;

  // d-th time derivative of segment k at local time t in [0, T_k].
  Vec3 evaluate_segment(std::size_t k, double t, int derivative = 0) const;
  // d-th time derivative at global parameter t (clamped to the domain).
  Vec3 evaluate(double t, int derivative = 0) const;

  // Integral of the squared 4th derivative, summed over axes and segments.
  double snap_cost() const;

 private:
  std::vector<SegmentCoeffs> segments_;
  std::vector<double> durations_;
};

struct DiscretizedPath {
  std::vector<double> s;
  Vec3List gamma;
  Vec3List dgamma;
  Vec3List ddgamma;
  double ds = 0.0;

  std::size_t size() const { return s.size(); }
  double length() const { return ds * static_cast<double>(size() - 1); }

  // Throws InputError if the arc-length invariants do not hold.
  void validate() const;
};

struct PerturbationSpec {
  double epsilon = 0.0;
  int n_samples = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PerturbedPath {
  WaypointList waypoints;
  DiscretizedPath path;
  double max_deviation = 0.0;  // max_i |gamma_hat(s_i) - gamma(s_i)|
};

std::vector<double> allocate_times(const WaypointList& waypoints,
                                   double v_nom = kDefaultNominalSpeed);

PiecewisePolyPath fit_min_snap(const WaypointList& waypoints,
                               const std::vector<double>& durations);

DiscretizedPath discretize_arclength(const PiecewisePolyPath& path,
                                     int n_samples = kDefaultSamples);

// Convenience: allocate_times -> fit_min_snap -> discretize_arclength.
DiscretizedPath plan_path(const WaypointList& waypoints,
                          double v_nom = kDefaultNominalSpeed,
                          int n_samples = kDefaultSamples);

// Total arc length of the polynomial path.
double arc_length(const PiecewisePolyPath& path);

// Each sample moves every waypoint independently inside the closed ball of
// radius epsilon, refits with the given durations and reports the achieved
// per-station deviation from the nominal discretization.
std::vector<PerturbedPath> perturb_path(const WaypointList& waypoints,
                                        const std::vector<double>& durations,
                                        const PerturbationSpec& spec,
                                        int n_samples = kDefaultSamples);

// Same, with durations from allocate_times at the default nominal speed.
std::vector<PerturbedPath> perturb_path(const WaypointList& waypoints,
                                        const PerturbationSpec& spec,
                                        int n_samples = kDefaultSamples);

// Deterministic single-waypoint shift (e.g. the first waypoint by 0.1 m).
PerturbedPath shift_waypoint(const WaypointList& waypoints,
                             const std::vector<double>& durations,
                             std::size_t index, const Vec3& offset,
                             int n_samples = kDefaultSamples);

// Per-station max distance between two discretizations of equal size.
double max_station_deviation(const DiscretizedPath& a,
                             const DiscretizedPath& b);

}  // namespace toppkit::path
