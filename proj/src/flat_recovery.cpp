#include "toppkit/flat_recovery.hpp"

#include "toppkit/errors.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numbers>
#include <sstream>

namespace toppkit::flat {

void SpeedYawProfile::validate() const {
  const std::size_t n = h.size();
  if (cos_yaw.size() != n || yaw.size() != n) {
    throw InputError("SpeedYawProfile: inconsistent lengths");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(h[i] >= 0.0)) {
      throw InputError("SpeedYawProfile: negative squared speed at sample " +
                       std::to_string(i));
    }
    if (!(std::abs(cos_yaw[i]) <= 1.0 + 1e-9)) {
      throw InputError("SpeedYawProfile: |cos_yaw| > 1 at sample " +
                       std::to_string(i));
    }
    if (i > 0 && !(std::abs(yaw[i] - yaw[i - 1]) < std::numbers::pi)) {
      throw InputError("SpeedYawProfile: yaw jump >= pi at sample " +
                       std::to_string(i));
    }
  }
}

SpeedYawProfile SpeedYawProfile::from_yaw(std::vector<double> h,
                                          std::vector<double> yaw) {
  if (h.size() != yaw.size()) {
    throw InputError("SpeedYawProfile: inconsistent lengths");
  }
  SpeedYawProfile p;
  p.cos_yaw.resize(yaw.size());
  for (std::size_t i = 0; i < yaw.size(); ++i) p.cos_yaw[i] = std::cos(yaw[i]);
  p.h = std::move(h);
  p.yaw = std::move(yaw);
  return p;
}

SpeedYawProfile SpeedYawProfile::from_cos(std::vector<double> h,
                                          std::vector<double> cos_yaw) {
  if (h.size() != cos_yaw.size() || h.empty()) {
    throw InputError("SpeedYawProfile: inconsistent lengths");
  }
  SpeedYawProfile p;
  const double theta0 = std::acos(std::clamp(cos_yaw.front(), -1.0, 1.0));
  p.yaw = unwrap_yaw(cos_yaw, theta0);
  p.h = std::move(h);
  p.cos_yaw = std::move(cos_yaw);
  return p;
}

void FullTrajectory::resize(std::size_t n) {
  t.resize(n);
  p.resize(n);
  v.resize(n);
  a.resize(n);
  q.resize(n);
  omega.resize(n);
  alpha.resize(n);
  u.resize(n);
}

void FullTrajectory::validate() const {
  const std::size_t n = t.size();
  if (p.size() != n || v.size() != n || a.size() != n || q.size() != n ||
      omega.size() != n || alpha.size() != n || u.size() != n) {
    throw InputError("FullTrajectory: inconsistent lengths");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(q[i].norm() - 1.0) > 1e-9) {
      throw InputError("FullTrajectory: non-unit quaternion at sample " +
                       std::to_string(i));
    }
    if (i > 0 && t[i] < t[i - 1]) {
      throw InputError("FullTrajectory: timestamps decrease at sample " +
                       std::to_string(i));
    }
  }
}

double speed_derivative_at(std::span<const double> h, double ds,
                           std::size_t i) {
  const std::size_t n = h.size();
  if (n < 2) return 0.0;
  if (n == 2) return (h[1] - h[0]) / ds;
  if (i == 0) return (-3.0 * h[0] + 4.0 * h[1] - h[2]) / (2.0 * ds);
  if (i + 1 == n) {
    return (3.0 * h[n - 1] - 4.0 * h[n - 2] + h[n - 3]) / (2.0 * ds);
  }
  return (h[i + 1] - h[i - 1]) / (2.0 * ds);
}

std::vector<double> speed_derivative(std::span<const double> h, double ds) {
  std::vector<double> out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    out[i] = speed_derivative_at(h, ds, i);
  }
  return out;
}

Vec3 thrust_vector(const Vec3& a, const QuadModel& model) {
  return model.mass * (a - model.gravity);
}

Quat tilt_quaternion(const Vec3& b3) {
  const double c1 = 1.0 + b3.z();
  const double scale = 1.0 / std::sqrt(2.0 * c1);
  return Quat(scale * c1, -scale * b3.y(), scale * b3.x(), 0.0);
}

Quat yaw_quaternion(double yaw) {
  return Quat(std::cos(0.5 * yaw), 0.0, 0.0, std::sin(0.5 * yaw));
}

bool try_attitude(const Vec3& a, double yaw, const QuadModel& model,
                  Quat& out) {
  const Vec3 force = thrust_vector(a, model);
  const double norm = force.norm();
  if (!(norm > 0.0)) return false;
  const Vec3 b3 = force / norm;
  if (!(1.0 + b3.z() > kHopfGuard)) return false;
  out = tilt_quaternion(b3) * yaw_quaternion(yaw);
  return true;
}

Quat recover_attitude(const Vec3& a, double yaw, const QuadModel& model) {
  const Vec3 force = thrust_vector(a, model);
  const double norm = force.norm();
  if (!(norm > 0.0)) {
    throw NumericalError("recover_attitude: thrust vector m*a - g vanishes");
  }
  const Vec3 b3 = force / norm;
  if (!(1.0 + b3.z() > kHopfGuard)) {
    std::ostringstream msg;
    msg << "recover_attitude: Hopf tilt chart undefined for inverted thrust "
           "(1 + b3_z = "
        << 1.0 + b3.z() << " <= " << kHopfGuard << ")";
    throw SingularityError(msg.str());
  }
  return tilt_quaternion(b3) * yaw_quaternion(yaw);
}

std::vector<double> unwrap_yaw(std::span<const double> cos_yaw,
                               double theta0) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::vector<double> yaw(cos_yaw.size());
  if (yaw.empty()) return yaw;
  yaw[0] = theta0;
  for (std::size_t i = 1; i < cos_yaw.size(); ++i) {
    const double base = std::acos(std::clamp(cos_yaw[i], -1.0, 1.0));
    const double prev = yaw[i - 1];
    double best = prev;
    double best_dist = std::numeric_limits<double>::infinity();
    for (double sign : {1.0, -1.0}) {
      double cand = sign * base;
      cand += two_pi * std::round((prev - cand) / two_pi);
      const double dist = std::abs(cand - prev);
      if (dist < best_dist) {
        best_dist = dist;
        best = cand;
      }
    }
    yaw[i] = best;
  }
  return yaw;
}

bool try_spatial_rate(const Quat& q_i, const Quat& q_next, double ds,
                      Vec3& out) {
  Quat rel = q_i.conjugate() * q_next;
  if (rel.w() < 0.0) rel.coeffs() = -rel.coeffs();
  if (!(rel.w() > kStepRotationGuard)) return false;
  out = (2.0 / (ds * rel.w())) * rel.vec();
  return true;
}

Vec3List recover_body_rates(std::span<const Quat> q, double ds,
                            std::span<const double> h) {
  const std::size_t n = q.size();
  if (h.size() != n) throw InputError("recover_body_rates: length mismatch");
  Vec3List omega(n, Vec3::Zero());
  if (n < 2) return omega;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    Vec3 spatial;
    if (!try_spatial_rate(q[i], q[i + 1], ds, spatial)) {
      throw SingularityError(
          "recover_body_rates: step rotation too large for the discrete "
          "model at sample " +
          std::to_string(i));
    }
    if (h[i] < 0.0) throw InputError("recover_body_rates: negative h");
    omega[i] = std::sqrt(h[i]) * spatial;
  }
  omega[n - 1] = omega[n - 2];
  return omega;
}

Timing traversal_time(std::span<const double> h, double ds) {
  Timing out;
  const std::size_t n = h.size();
  out.timestamps.assign(n, 0.0);
  if (n < 2) return out;
  out.steps.assign(n - 1, 0.0);
  bool all_rest = true;
  for (double v : h) {
    if (v < 0.0) throw InputError("traversal_time: negative squared speed");
    if (v > 0.0) all_rest = false;
  }
  if (all_rest) return out;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (h[i] == 0.0 && h[i + 1] == 0.0) {
      throw NumericalError("traversal_time: infinite time on step " +
                           std::to_string(i) + " (h = 0 at both ends)");
    }
    out.steps[i] = step_time(h[i], h[i + 1], ds);
    out.timestamps[i + 1] = out.timestamps[i] + out.steps[i];
  }
  out.total = out.timestamps.back();
  return out;
}

std::vector<double> traversal_time_gradient(std::span<const double> h,
                                            double ds) {
  const std::size_t n = h.size();
  std::vector<double> grad(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double si = std::sqrt(h[i]);
    const double sj = std::sqrt(h[i + 1]);
    const double denom = (si + sj) * (si + sj);
    // d/dh of 2 ds / (sqrt(h_i) + sqrt(h_j)) = -ds / (denom * sqrt(h))
    if (si > 0.0) grad[i] += -ds / (denom * si);
    if (sj > 0.0) grad[i + 1] += -ds / (denom * sj);
  }
  return grad;
}

Vec3List angular_acceleration(std::span<const Vec3> omega,
                              std::span<const double> t) {
  const std::size_t n = omega.size();
  if (t.size() != n) throw InputError("angular_acceleration: length mismatch");
  Vec3List alpha(n, Vec3::Zero());
  if (n < 2) return alpha;
  auto forward = [&](std::size_t i) -> Vec3 {
    const double dt = t[i + 1] - t[i];
    return dt > 0.0 ? Vec3((omega[i + 1] - omega[i]) / dt) : Vec3::Zero();
  };
  alpha[0] = forward(0);
  alpha[n - 1] = forward(n - 2);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double dp = t[i] - t[i - 1];
    const double dn = t[i + 1] - t[i];
    if (dp > 0.0 && dn > 0.0) {
      alpha[i] = nonuniform_derivative(omega[i - 1], omega[i], omega[i + 1],
                                       dp, dn);
    }
  }
  return alpha;
}

Vec4 motor_thrusts(const Vec3& a, const Vec3& omega, const Vec3& alpha,
                   const QuadModel& model, const Mat4& mixer_inverse) {
  const Vec3 J = model.inertia;
  const Vec3 Jw = J.cwiseProduct(omega);
  const Vec3 torque = J.cwiseProduct(alpha) + omega.cross(Jw);
  Vec4 wrench;
  wrench << thrust_vector(a, model).norm(), torque;
  return mixer_inverse * wrench;
}

Translational recover_translational(const path::DiscretizedPath& path,
                                    std::span<const double> h) {
  const std::size_t n = path.size();
  if (h.size() != n) {
    throw InputError("recover_translational: profile/path length mismatch");
  }
  for (double v : h) {
    if (!(v >= 0.0)) {
      throw InputError("recover_translational: negative squared speed");
    }
  }
  Translational out;
  out.v.resize(n);
  out.a.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double dh = speed_derivative_at(h, path.ds, i);
    out.v[i] = std::sqrt(h[i]) * path.dgamma[i];
    out.a[i] = acceleration_at(path.dgamma[i], path.ddgamma[i], h[i], dh);
  }
  return out;
}

void recover_thrusts(FullTrajectory& traj, const QuadModel& model) {
  const Mat4 minv = model.mixer_inverse();
  traj.u.resize(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    traj.u[i] = motor_thrusts(traj.a[i], traj.omega[i], traj.alpha[i], model,
                              minv);
  }
}

FullTrajectory recover_trajectory(const path::DiscretizedPath& path,
                                  const SpeedYawProfile& profile,
                                  const QuadModel& model) {
  const std::size_t n = path.size();
  if (profile.size() != n) {
    throw InputError("recover_trajectory: profile/path length mismatch");
  }
  FullTrajectory traj;
  traj.resize(n);
  Translational tr = recover_translational(path, profile.h);
  traj.p = path.gamma;
  traj.v = std::move(tr.v);
  traj.a = std::move(tr.a);
  for (std::size_t i = 0; i < n; ++i) {
    traj.q[i] = recover_attitude(traj.a[i], profile.yaw[i], model);
  }
  traj.omega = recover_body_rates(traj.q, path.ds, profile.h);
  Timing timing = traversal_time(profile.h, path.ds);
  traj.t = std::move(timing.timestamps);
  traj.alpha = angular_acceleration(traj.omega, traj.t);
  recover_thrusts(traj, model);
  return traj;
}

Quat propagate_quaternion(const Quat& q, const Vec3& spatial_rate, double ds) {
  const Quat step(1.0, 0.5 * ds * spatial_rate.x(), 0.5 * ds * spatial_rate.y(),
                  0.5 * ds * spatial_rate.z());
  Quat next = q * step;
  next.coeffs() /= std::sqrt(1.0 + 0.25 * ds * ds * spatial_rate.squaredNorm());
  return next;
}

double attitude_distance(const Quat& a, const Quat& b) {
  const double d = std::min(1.0, std::abs(a.dot(b)));
  return 2.0 * std::acos(d);
}

double hopf_yaw(const Quat& q) {
  const Vec3 b3 = q * Vec3::UnitZ();
  if (!(1.0 + b3.z() > kHopfGuard)) return 0.0;
  const Quat yaw_part = tilt_quaternion(b3).conjugate() * q;
  return 2.0 * std::atan2(yaw_part.z(), yaw_part.w());
}

}  // namespace toppkit::flat
