#include "toppkit/sim_control.hpp"

#include "toppkit/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace toppkit::sim {

using nlohmann::json;

namespace {

Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return m;
}

Vec3 vee(const Mat3& m) { return Vec3(m(2, 1), m(0, 2), m(1, 0)); }

Vec4 quat_coeffs(const Quat& q) { return Vec4(q.w(), q.x(), q.y(), q.z()); }

Quat quat_from(const Vec4& c) { return Quat(c(0), c(1), c(2), c(3)); }

QuadState advance(const QuadState& s, const StateDerivative& d, double h) {
  QuadState out;
  out.p = s.p + h * d.dp;
  out.v = s.v + h * d.dv;
  out.q = quat_from(quat_coeffs(s.q) + h * d.dq);
  out.omega = s.omega + h * d.domega;
  return out;
}

double nearest_distance(const flat::FullTrajectory& ref, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const Vec3& r : ref.p) best = std::min(best, (r - p).squaredNorm());
  return std::sqrt(best);
}

}  // namespace

bool QuadState::finite() const {
  return p.allFinite() && v.allFinite() && q.coeffs().allFinite() &&
         omega.allFinite();
}

void ControllerGains::validate() const {
  if (!(k_p > 0.0) || !(k_v > 0.0) || !(k_R > 0.0) || !(k_omega > 0.0)) {
    throw InputError("controller gains must be strictly positive");
  }
}

ControllerGains gains_from_json_text(const std::string& text) {
  ControllerGains g;
  try {
    const json j = json::parse(text);
    if (j.contains("k_p")) g.k_p = j["k_p"].get<double>();
    if (j.contains("k_v")) g.k_v = j["k_v"].get<double>();
    if (j.contains("k_R")) g.k_R = j["k_R"].get<double>();
    if (j.contains("k_omega")) g.k_omega = j["k_omega"].get<double>();
  } catch (const json::exception& e) {
    throw InputError(std::string("gains: ") + e.what());
  }
  g.validate();
  return g;
}

ControllerGains load_gains(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw InputError("cannot open gains file: " + file);
  std::stringstream buf;
  buf << in.rdbuf();
  return gains_from_json_text(buf.str());
}

std::string gains_to_json_text(const ControllerGains& g) {
  json j;
  j["k_p"] = g.k_p;
  j["k_v"] = g.k_v;
  j["k_R"] = g.k_R;
  j["k_omega"] = g.k_omega;
  return j.dump(2);
}

ReferencePoint reference_row(const flat::FullTrajectory& traj, std::size_t i) {
  ReferencePoint r;
  r.p = traj.p[i];
  r.v = traj.v[i];
  r.a = traj.a[i];
  r.q = traj.q[i];
  r.omega = traj.omega[i];
  r.alpha = traj.alpha[i];
  return r;
}

QuadState state_row(const flat::FullTrajectory& traj, std::size_t i) {
  QuadState s;
  s.p = traj.p[i];
  s.v = traj.v[i];
  s.q = traj.q[i];
  s.omega = traj.omega[i];
  return s;
}

Vec4 saturate(const Vec4& u, const QuadModel& model) {
  return u.cwiseMax(model.u_min).cwiseMin(model.u_max);
}

StateDerivative dynamics(const QuadState& s, const Vec4& u,
                         const QuadModel& model) {
  const Vec4 wrench = model.mixer() * u;
  const Vec3 torque = wrench.tail<3>();
  const Vec3 J = model.inertia;
  StateDerivative d;
  d.dp = s.v;
  d.dv = model.gravity + (s.q * Vec3::UnitZ()) * (wrench(0) / model.mass);
  const Quat w(0.0, s.omega.x(), s.omega.y(), s.omega.z());
  d.dq = 0.5 * quat_coeffs(s.q * w);
  const Vec3 Jw = J.cwiseProduct(s.omega);
  d.domega = (torque - s.omega.cross(Jw)).cwiseQuotient(J);
  return d;
}

QuadState step_dynamics(const QuadState& state, const Vec4& u, double dt,
                        const QuadModel& model, long step) {
  if (!(dt > 0.0)) throw InputError("step_dynamics: dt must be > 0");
  const Vec4 us = saturate(u, model);
  const StateDerivative k1 = dynamics(state, us, model);
  const StateDerivative k2 = dynamics(advance(state, k1, 0.5 * dt), us, model);
  const StateDerivative k3 = dynamics(advance(state, k2, 0.5 * dt), us, model);
  const StateDerivative k4 = dynamics(advance(state, k3, dt), us, model);
  StateDerivative sum;
  sum.dp = k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp;
  sum.dv = k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv;
  sum.dq = k1.dq + 2.0 * k2.dq + 2.0 * k3.dq + k4.dq;
  sum.domega = k1.domega + 2.0 * k2.domega + 2.0 * k3.domega + k4.domega;
  QuadState next = advance(state, sum, dt / 6.0);
  next.q.normalize();
  if (!next.finite()) throw SimulationFault("non-finite state", step);
  return next;
}

Vec4 se3_control(const QuadState& s, const ReferencePoint& ref,
                 const ControllerGains& gains, const QuadModel& model) {
  const Vec3 e_p = s.p - ref.p;
  const Vec3 e_v = s.v - ref.v;
  const Vec3 force =
      model.mass * (ref.a - gains.k_p * e_p - gains.k_v * e_v - model.gravity);

  const Mat3 R = s.q.toRotationMatrix();
  const double thrust = force.dot(R.col(2));

  const double norm = force.norm();
  Vec3 b3_d = Vec3::UnitZ();
  if (norm > 1e-9 && 1.0 + force.z() / norm > flat::kHopfGuard) {
    b3_d = force / norm;
  }
  const Quat q_d = flat::tilt_quaternion(b3_d) *
                   flat::yaw_quaternion(flat::hopf_yaw(ref.q));
  const Mat3 R_d = q_d.toRotationMatrix();

  const Mat3 rel = R.transpose() * R_d;
  const Vec3 e_R = 0.5 * vee(R_d.transpose() * R - rel);
  const Vec3 omega_d = rel * ref.omega;
  const Vec3 e_w = s.omega - omega_d;

  const Mat3 J = model.inertia_matrix();
  const Vec3 torque = J * (-gains.k_R * e_R - gains.k_omega * e_w) +
                      s.omega.cross(J * s.omega) -
                      J * (hat(s.omega) * omega_d - rel * ref.alpha);

  Vec4 wrench;
  wrench << thrust, torque;
  return saturate(model.mixer_inverse() * wrench, model);
}

SimResult simulate_tracking(const flat::FullTrajectory& ref,
                            const ControllerGains& gains,
                            const QuadModel& model, double dt) {
  const std::size_t n = ref.size();
  if (n < 2) throw InputError("simulate_tracking: reference needs >= 2 rows");
  if (!(dt > 0.0)) throw InputError("simulate_tracking: dt must be > 0");
  gains.validate();
  double min_spacing = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double gap = ref.t[i + 1] - ref.t[i];
    if (!(gap > 0.0)) {
      throw InputError("simulate_tracking: timestamps must be increasing");
    }
    min_spacing = std::min(min_spacing, gap);
  }
  if (dt > 0.25 * min_spacing) {
    throw InputError("simulate_tracking: dt exceeds a quarter of the "
                     "smallest reference spacing");
  }

  const double v_ceiling = 4.0 * model.v_max;

  SimResult res;
  flat::FullTrajectory& out = res.actual;
  out.resize(n);
  QuadState s = state_row(ref, 0);
  long step = 0;
  std::size_t rows = n;

  auto record = [&](std::size_t i, const Vec4& u) {
    const StateDerivative d = dynamics(s, u, model);
    out.t[i] = ref.t[i];
    out.p[i] = s.p;
    out.v[i] = s.v;
    out.a[i] = d.dv;
    out.q[i] = s.q;
    out.omega[i] = s.omega;
    out.alpha[i] = d.domega;
    out.u[i] = u;
  };

  for (std::size_t i = 0; i < n; ++i) {
    const ReferencePoint r = reference_row(ref, i);
    const Vec4 u0 = se3_control(s, r, gains, model);
    record(i, u0);
    if (i + 1 == n) break;

    const double span = ref.t[i + 1] - ref.t[i];
    const auto substeps = static_cast<long>(std::ceil(span / dt - 1e-9));
    const double h = span / static_cast<double>(substeps);
    try {
      for (long k = 0; k < substeps; ++k, ++step) {
        const Vec4 u = k == 0 ? u0 : se3_control(s, r, gains, model);
        s = step_dynamics(s, u, h, model, step);
        if (s.v.norm() > v_ceiling) {
          throw SimulationFault("speed above safety ceiling", step);
        }
      }
      if (nearest_distance(ref, s.p) > 10.0) {
        throw SimulationFault("left the 10 m corridor", step);
      }
    } catch (const SimulationFault& f) {
      res.crashed = true;
      res.fault_step = f.step();
      res.reason = f.what();
      rows = i + 1;
      break;
    }
  }
  if (rows < n) {
    out.t.resize(rows);
    out.p.resize(rows);
    out.v.resize(rows);
    out.a.resize(rows);
    out.q.resize(rows);
    out.omega.resize(rows);
    out.alpha.resize(rows);
    out.u.resize(rows);
  }
  return res;
}

}  // namespace toppkit::sim
