#include "toppkit/path_gen.hpp"

#include "toppkit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

namespace toppkit::path {
namespace {

// k! / (k - d)!
double falling_factorial(int k, int d) {
  if (d > k) return 0.0;
  double r = 1.0;
  for (int i = 0; i < d; ++i) r *= static_cast<double>(k - i);
  return r;
}

// Row of the d-th derivative w.r.t. normalized time at tau (no 1/T^d factor).
Eigen::Matrix<double, 1, kNumCoeffs> derivative_row(double tau, int d) {
  Eigen::Matrix<double, 1, kNumCoeffs> row;
  for (int k = 0; k < kNumCoeffs; ++k) {
    if (k < d) {
      row(k) = 0.0;
    } else {
      row(k) = falling_factorial(k, d) * std::pow(tau, k - d);
    }
  }
  return row;
}

Vec3 eval_normalized(const SegmentCoeffs& c, double tau, int d) {
  Vec3 out = Vec3::Zero();
  // Horner on the derivative polynomial.
  for (int k = kPolyOrder; k >= d; --k) {
    out = out * tau + c.col(k) * falling_factorial(k, d);
  }
  return out;
}

double adaptive_simpson_step(const std::function<double(double)>& f, double a,
                             double b, double fa, double fm, double fb,
                             double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return adaptive_simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol,
                               depth - 1) +
         adaptive_simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol,
                               depth - 1);
}

double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double tol) {
  if (b <= a) return 0.0;
  const double fa = f(a);
  const double fb = f(b);
  const double m = 0.5 * (a + b);
  const double fm = f(m);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson_step(f, a, b, fa, fm, fb, whole, tol, 40);
}

constexpr double kArcTol = 1e-12;
constexpr double kInversionTol = 1e-9;

// Arc length of segment k between normalized times a and b.
double segment_arc(const PiecewisePolyPath& path, std::size_t k, double a,
                   double b) {
  const SegmentCoeffs& c = path.segments()[k];
  auto speed = [&c](double tau) { return eval_normalized(c, tau, 1).norm(); };
  return adaptive_simpson(speed, a, b, kArcTol);
}

// Unit tangent at a rest point from the first non-vanishing derivative.
// `ending` selects the one-sided limit approaching from below.
Vec3 limit_tangent(const PiecewisePolyPath& path, std::size_t k, double tau,
                   bool ending) {
  const SegmentCoeffs& c = path.segments()[k];
  for (int d = 2; d <= kPolyOrder; ++d) {
    const Vec3 v = eval_normalized(c, tau, d);
    if (v.norm() > 1e-12) {
      const double sign = (ending && d % 2 == 0) ? -1.0 : 1.0;
      return sign * v.normalized();
    }
  }
  return Vec3::UnitX();
}

std::mt19937_64 sample_stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index & 0xffffffffu),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

PiecewisePolyPath::PiecewisePolyPath(std::vector<SegmentCoeffs> segments,
                                     std::vector<double> durations)
    : segments_(std::move(segments)), durations_(std::move(durations)) {
  if (segments_.size() != durations_.size() || segments_.empty()) {
    throw InputError("PiecewisePolyPath: segment/duration count mismatch");
  }
}

double PiecewisePolyPath::total_duration() const {
  double total = 0.0;
  for (double d : durations_) total += d;
  return total;
}

Vec3 PiecewisePolyPath::evaluate_segment(std::size_t k, double t,
                                         int derivative) const {
  const double T = durations_[k];
  return eval_normalized(segments_[k], t / T, derivative) /
         std::pow(T, derivative);
}

Vec3 PiecewisePolyPath::evaluate(double t, int derivative) const {
  t = std::max(0.0, t);
  for (std::size_t k = 0; k < segments_.size(); ++k) {
    if (t <= durations_[k] || k + 1 == segments_.size()) {
      return evaluate_segment(k, std::min(t, durations_[k]), derivative);
    }
    t -= durations_[k];
  }
  return Vec3::Zero();
}

double PiecewisePolyPath::snap_cost() const {
  double cost = 0.0;
  for (std::size_t seg = 0; seg < segments_.size(); ++seg) {
    const double T = durations_[seg];
    const SegmentCoeffs& c = segments_[seg];
    double acc = 0.0;
    for (int k = 4; k < kNumCoeffs; ++k) {
      for (int l = 4; l < kNumCoeffs; ++l) {
        const double w = falling_factorial(k, 4) * falling_factorial(l, 4) /
                         static_cast<double>(k + l - 7);
        acc += w * c.col(k).dot(c.col(l));
      }
    }
    cost += acc / std::pow(T, 7);
  }
  return cost;
}

void DiscretizedPath::validate() const {
  const std::size_t n = s.size();
  if (n < 2 || gamma.size() != n || dgamma.size() != n ||
      ddgamma.size() != n) {
    throw InputError("DiscretizedPath: inconsistent sample counts");
  }
  if (!(ds > 0.0)) throw InputError("DiscretizedPath: non-positive spacing");
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(dgamma[i].norm() - 1.0) > 1e-6) {
      throw InputError("DiscretizedPath: tangent not unit length at sample " +
                       std::to_string(i));
    }
    if (std::abs(dgamma[i].dot(ddgamma[i])) > 1e-4) {
      throw InputError(
          "DiscretizedPath: curvature not orthogonal to tangent at sample " +
          std::to_string(i));
    }
    if (std::abs(s[i] - ds * static_cast<double>(i)) > 1e-6) {
      throw InputError("DiscretizedPath: non-uniform arc-length grid");
    }
  }
}

void PerturbationSpec::validate() const {
  if (!(epsilon >= 0.0)) throw InputError("PerturbationSpec: epsilon < 0");
  if (n_samples < 1) throw InputError("PerturbationSpec: n_samples < 1");
}

std::vector<double> allocate_times(const WaypointList& waypoints,
                                   double v_nom) {
  if (waypoints.size() < 2) {
    throw InputError("allocate_times: need at least 2 waypoints");
  }
  if (!(v_nom > 0.0)) throw InputError("allocate_times: v_nom must be > 0");
  std::vector<double> durations;
  durations.reserve(waypoints.size() - 1);
  for (std::size_t k = 0; k + 1 < waypoints.size(); ++k) {
    const double dist = (waypoints.points[k + 1] - waypoints.points[k]).norm();
    const double t = dist / v_nom;
    durations.push_back(t > 0.0 ? t : kMinSegmentDuration);
  }
  return durations;
}

PiecewisePolyPath fit_min_snap(const WaypointList& waypoints,
                               const std::vector<double>& durations) {
  if (waypoints.size() < 2) {
    throw InputError("fit_min_snap: need at least 2 waypoints");
  }
  const std::size_t m = waypoints.size() - 1;
  if (durations.size() != m) {
    throw InputError("fit_min_snap: expected " + std::to_string(m) +
                     " durations, got " + std::to_string(durations.size()));
  }
  for (double d : durations) {
    if (!(d > 0.0)) throw InputError("fit_min_snap: durations must be > 0");
  }

  // Rest boundary conditions (v, a, j = 0) at both ends, interpolation at
  // every waypoint and continuity of derivatives 1..6 at the junctions. These
  // are exactly the optimality conditions of the squared-snap objective, so
  // the square system yields the minimizer directly.
  const int n = static_cast<int>(kNumCoeffs * m);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, 3);
  int row = 0;
  auto block = [](std::size_t seg) { return static_cast<int>(seg) * kNumCoeffs; };

  for (int d = 0; d <= 3; ++d) {
    A.block(row, block(0), 1, kNumCoeffs) = derivative_row(0.0, d);
    if (d == 0) b.row(row) = waypoints.points.front().transpose();
    ++row;
  }
  for (std::size_t j = 1; j < m; ++j) {
    const double t_left = durations[j - 1];
    const double t_right = durations[j];
    A.block(row, block(j - 1), 1, kNumCoeffs) = derivative_row(1.0, 0);
    b.row(row) = waypoints.points[j].transpose();
    ++row;
    A.block(row, block(j), 1, kNumCoeffs) = derivative_row(0.0, 0);
    b.row(row) = waypoints.points[j].transpose();
    ++row;
    // Rows scaled by t_left^d so both sides stay O(1).
    for (int d = 1; d <= 6; ++d) {
      A.block(row, block(j - 1), 1, kNumCoeffs) = derivative_row(1.0, d);
      A.block(row, block(j), 1, kNumCoeffs) =
          -derivative_row(0.0, d) * std::pow(t_left / t_right, d);
      ++row;
    }
  }
  for (int d = 0; d <= 3; ++d) {
    A.block(row, block(m - 1), 1, kNumCoeffs) = derivative_row(1.0, d);
    if (d == 0) b.row(row) = waypoints.points.back().transpose();
    ++row;
  }

  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (lu.rank() < n) {
    std::ostringstream msg;
    msg << "fit_min_snap: singular constraint system (rank " << lu.rank()
        << " of " << n << "); check for near-zero segment durations";
    throw NumericalError(msg.str());
  }
  const Eigen::MatrixXd x = lu.solve(b);
  const double residual = (A * x - b).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  if (!x.allFinite() || residual > 1e-9 * scale) {
    std::ostringstream msg;
    msg << "fit_min_snap: ill-conditioned system, residual " << residual;
    throw NumericalError(msg.str());
  }

  std::vector<SegmentCoeffs> segments(m);
  for (std::size_t k = 0; k < m; ++k) {
    segments[k] = x.block(block(k), 0, kNumCoeffs, 3).transpose();
  }
  return PiecewisePolyPath(std::move(segments), durations);
}

double arc_length(const PiecewisePolyPath& path) {
  double total = 0.0;
  for (std::size_t k = 0; k < path.segment_count(); ++k) {
    total += segment_arc(path, k, 0.0, 1.0);
  }
  return total;
}

DiscretizedPath discretize_arclength(const PiecewisePolyPath& path,
                                     int n_samples) {
  if (n_samples < 2) throw InputError("discretize_arclength: N must be >= 2");
  const std::size_t m = path.segment_count();
  std::vector<double> cum(m + 1, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    cum[k + 1] = cum[k] + segment_arc(path, k, 0.0, 1.0);
  }
  const double length = cum[m];
  if (!(length > 1e-9)) {
    throw DegenerateInputError("discretize_arclength: path has zero length");
  }

  const auto n = static_cast<std::size_t>(n_samples);
  DiscretizedPath out;
  out.ds = length / static_cast<double>(n - 1);
  out.s.resize(n);
  out.gamma.resize(n);
  out.dgamma.resize(n);
  out.ddgamma.resize(n);

  std::vector<std::size_t> seg_of(n);
  std::vector<double> tau_of(n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double target = out.ds * static_cast<double>(i);
    out.s[i] = target;
    if (i == 0) {
      seg_of[i] = 0;
      tau_of[i] = 0.0;
      continue;
    }
    if (i + 1 == n) {
      seg_of[i] = m - 1;
      tau_of[i] = 1.0;
      continue;
    }
    while (k + 1 < m && cum[k + 1] < target) ++k;
    // Bisection on the normalized time of segment k; the arc length of the
    // lower bracket end is carried along so each probe integrates only the
    // bracket remainder.
    double lo = 0.0;
    double hi = 1.0;
    double arc_lo = cum[k];
    const double goal = std::clamp(target, cum[k], cum[k + 1]);
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double arc_mid = arc_lo + segment_arc(path, k, lo, mid);
      if (std::abs(arc_mid - goal) <= kInversionTol * 1e-3) {
        lo = hi = mid;
        break;
      }
      if (arc_mid < goal) {
        lo = mid;
        arc_lo = arc_mid;
      } else {
        hi = mid;
      }
    }
    seg_of[i] = k;
    tau_of[i] = 0.5 * (lo + hi);
  }

  std::vector<bool> at_rest(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t seg = seg_of[i];
    const double T = path.durations()[seg];
    const double t = tau_of[i] * T;
    out.gamma[i] = path.evaluate_segment(seg, t, 0);
    const Vec3 vel = path.evaluate_segment(seg, t, 1);
    const Vec3 acc = path.evaluate_segment(seg, t, 2);
    const double speed = vel.norm();
    const bool endpoint = (i == 0 || i + 1 == n);
    if (endpoint || speed < 1e-10) {
      out.dgamma[i] = limit_tangent(path, seg, tau_of[i], i + 1 == n);
      out.ddgamma[i] = Vec3::Zero();
      at_rest[i] = true;
      continue;
    }
    const Vec3 tangent = vel / speed;
    out.dgamma[i] = tangent;
    out.ddgamma[i] = (acc - acc.dot(tangent) * tangent) / (speed * speed);
  }
  // Curvature at rest points (the path endpoints) is taken from the nearest
  // regular station and re-orthogonalized against the limit tangent.
  auto borrow = [&](std::size_t i, std::size_t from) {
    const Vec3& t = out.dgamma[i];
    const Vec3& kappa = out.ddgamma[from];
    out.ddgamma[i] = kappa - kappa.dot(t) * t;
  };
  if (n > 2) {
    if (at_rest[0] && !at_rest[1]) borrow(0, 1);
    if (at_rest[n - 1] && !at_rest[n - 2]) borrow(n - 1, n - 2);
  }
  return out;
}

DiscretizedPath plan_path(const WaypointList& waypoints, double v_nom,
                          int n_samples) {
  return discretize_arclength(
      fit_min_snap(waypoints, allocate_times(waypoints, v_nom)), n_samples);
}

double max_station_deviation(const DiscretizedPath& a,
                             const DiscretizedPath& b) {
  if (a.size() != b.size()) {
    throw InputError("max_station_deviation: sample count mismatch");
  }
  double dev = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dev = std::max(dev, (a.gamma[i] - b.gamma[i]).norm());
  }
  return dev;
}

std::vector<PerturbedPath> perturb_path(const WaypointList& waypoints,
                                        const std::vector<double>& durations,
                                        const PerturbationSpec& spec,
                                        int n_samples) {
  spec.validate();
  const DiscretizedPath nominal =
      discretize_arclength(fit_min_snap(waypoints, durations), n_samples);

  std::vector<PerturbedPath> out;
  out.reserve(static_cast<std::size_t>(spec.n_samples));
  for (int k = 0; k < spec.n_samples; ++k) {
    std::mt19937_64 rng = sample_stream(spec.seed, static_cast<std::uint64_t>(k));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    PerturbedPath sample;
    sample.waypoints = waypoints;
    if (spec.epsilon > 0.0) {
      for (Vec3& w : sample.waypoints.points) {
        Vec3 dir(normal(rng), normal(rng), normal(rng));
        const double norm = dir.norm();
        dir = norm > 0.0 ? Vec3(dir / norm) : Vec3::UnitX();
        const double radius = spec.epsilon * std::cbrt(uniform(rng));
        w += radius * dir;
      }
      sample.path = discretize_arclength(
          fit_min_snap(sample.waypoints, durations), n_samples);
      sample.max_deviation = max_station_deviation(sample.path, nominal);
    } else {
      sample.path = nominal;
      sample.max_deviation = 0.0;
    }
    out.push_back(std::move(sample));
  }
  return out;
}

std::vector<PerturbedPath> perturb_path(const WaypointList& waypoints,
                                        const PerturbationSpec& spec,
                                        int n_samples) {
  return perturb_path(waypoints, allocate_times(waypoints), spec, n_samples);
}

PerturbedPath shift_waypoint(const WaypointList& waypoints,
                             const std::vector<double>& durations,
                             std::size_t index, const Vec3& offset,
                             int n_samples) {
  if (index >= waypoints.size()) {
    throw InputError("shift_waypoint: index out of range");
  }
  const DiscretizedPath nominal =
      discretize_arclength(fit_min_snap(waypoints, durations), n_samples);
  PerturbedPath out;
  out.waypoints = waypoints;
  out.waypoints.points[index] += offset;
  out.path =
      discretize_arclength(fit_min_snap(out.waypoints, durations), n_samples);
  out.max_deviation = max_station_deviation(out.path, nominal);
  return out;
}

}  // namespace toppkit::path
