#pragma once

#include "toppkit/path_gen.hpp"
#include "toppkit/quad_model.hpp"
#include "toppkit/types.hpp"

#include <span>
#include <vector>

// Recovery of the full state and control trajectory from a discretized path
// and its squared-speed / yaw profile. The point-level functions here are
// also the constraint chain of the TOPP solver, so both stay bit-consistent.
namespace toppkit::flat {

// Guard on (1 + b3_z) for the tilt quaternion chart.
inline constexpr double kHopfGuard = 1e-6;
// Minimum scalar part of a per-step relative rotation.
inline constexpr double kStepRotationGuard = 1e-6;

struct SpeedYawProfile {
  std::vector<double> h;        // squared speed, m^2/s^2
  std::vector<double> cos_yaw;  // cosine of yaw
  std::vector<double> yaw;      // unwrapped yaw, rad

  std::size_t size() const { return h.size(); }
  void validate() const;

  // From yaw angles; cos_yaw is filled in.
  static SpeedYawProfile from_yaw(std::vector<double> h,
                                  std::vector<double> yaw);
  // From cosines; yaw is unwrapped starting at acos(cos_yaw[0]).
  static SpeedYawProfile from_cos(std::vector<double> h,
                                  std::vector<double> cos_yaw);
};

struct FullTrajectory {
  std::vector<double> t;
  Vec3List p;
  Vec3List v;
  Vec3List a;
  std::vector<Quat> q;
  Vec3List omega;
  Vec3List alpha;
  std::vector<Vec4> u;

  std::size_t size() const { return t.size(); }
  void resize(std::size_t n);
  void validate() const;
};

struct Translational {
  Vec3List v;
  Vec3List a;
};

// --- point-level chain ----------------------------------------------------

// dh/ds: central differences inside, second-order one-sided at the ends.
std::vector<double> speed_derivative(std::span<const double> h, double ds);
double speed_derivative_at(std::span<const double> h, double ds,
                           std::size_t i);

// a = 1/2 gamma' h' + gamma'' h
inline Vec3 acceleration_at(const Vec3& dgamma, const Vec3& ddgamma, double h,
                            double dh) {
  return 0.5 * dh * dgamma + h * ddgamma;
}

// q_b3 (x) q_yaw. Returns false when 1 + b3_z <= kHopfGuard or the
// thrust vector vanishes; `out` is then left unspecified.
bool try_attitude(const Vec3& a, double yaw, const QuadModel& model,
                  Quat& out);
Quat tilt_quaternion(const Vec3& b3);
Quat yaw_quaternion(double yaw);
Vec3 thrust_vector(const Vec3& a, const QuadModel& model);

// Spatial body rate 2 q_v / (ds q_w) of the step q_i -> q_next after
// hemisphere alignment. Returns false if q_w <= kStepRotationGuard.
bool try_spatial_rate(const Quat& q_i, const Quat& q_next, double ds,
                      Vec3& out);

inline double step_time(double h_i, double h_next, double ds) {
  return 2.0 * ds / (std::sqrt(h_i) + std::sqrt(h_next));
}

// Second-order derivative on a non-uniform grid at an interior node, with
// dt_prev = t_i - t_{i-1} and dt_next = t_{i+1} - t_i.
inline Vec3 nonuniform_derivative(const Vec3& prev, const Vec3& mid,
                                  const Vec3& next, double dt_prev,
                                  double dt_next) {
  const double sum = dt_prev + dt_next;
  return (-dt_next / (dt_prev * sum)) * prev +
         ((dt_next - dt_prev) / (dt_prev * dt_next)) * mid +
         (dt_prev / (dt_next * sum)) * next;
}

// u = M^-1 [m |a - g|, J alpha + omega x J omega]; not clamped.
Vec4 motor_thrusts(const Vec3& a, const Vec3& omega, const Vec3& alpha,
                   const QuadModel& model, const Mat4& mixer_inverse);

// --- trajectory-level operations --------------------------------------------

Translational recover_translational(const path::DiscretizedPath& path,
                                    std::span<const double> h);

// Throws SingularityError when the tilt chart fails (1 + c <= kHopfGuard)
// and NumericalError when the thrust vector vanishes.
Quat recover_attitude(const Vec3& a, double yaw, const QuadModel& model);

std::vector<double> unwrap_yaw(std::span<const double> cos_yaw,
                               double theta0);

// Temporal rates sqrt(h_i) * 2 q_v / (ds q_w); the last point copies the
// penultimate rate. Throws SingularityError for >= 180 deg steps.
Vec3List recover_body_rates(std::span<const Quat> q, double ds,
                            std::span<const double> h);

struct Timing {
  double total = 0.0;
  std::vector<double> steps;       // N - 1 step durations
  std::vector<double> timestamps;  // N prefix sums starting at 0
};

// Throws NumericalError if an interior step has h_i = h_{i+1} = 0 while the
// path is not entirely at rest.
Timing traversal_time(std::span<const double> h, double ds);

// dT/dh_k of the discrete traversal time (analytic).
std::vector<double> traversal_time_gradient(std::span<const double> h,
                                            double ds);

// alpha by time-domain finite differences over possibly non-uniform stamps.
Vec3List angular_acceleration(std::span<const Vec3> omega,
                              std::span<const double> t);

// Fills traj.u from traj.a, traj.omega and traj.alpha.
void recover_thrusts(FullTrajectory& traj, const QuadModel& model);

// Whole chain: p, v, a, q, omega, t, alpha, u. Uses profile.yaw directly.
FullTrajectory recover_trajectory(const path::DiscretizedPath& path,
                                  const SpeedYawProfile& profile,
                                  const QuadModel& model);

// Forward discrete quaternion propagation q_{i+1} from q_i and a spatial
// rate (the relation inverted by try_spatial_rate).
Quat propagate_quaternion(const Quat& q, const Vec3& spatial_rate, double ds);

// Geodesic angle between two attitudes (rad, in [0, pi]).
double attitude_distance(const Quat& a, const Quat& b);

// Yaw of q under the tilt/yaw decomposition q = q_b3 (x) q_yaw.
double hopf_yaw(const Quat& q);

}  // namespace toppkit::flat
