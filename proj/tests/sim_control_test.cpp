#include "toppkit/errors.hpp"
#include "toppkit/eval_metrics.hpp"
#include "toppkit/sim_control.hpp"
#include "toppkit/topp_solver.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace toppkit;
using sim::QuadState;

namespace {

double hover_thrust(const QuadModel& m) { return m.mass * kGravity / 4.0; }

flat::FullTrajectory hover_reference(const QuadModel& m, const Vec3& p,
                                     double duration, int rows) {
  flat::FullTrajectory ref;
  ref.resize(rows);
  for (int i = 0; i < rows; ++i) {
    ref.t[i] = duration * i / (rows - 1);
    ref.p[i] = p;
    ref.v[i] = Vec3::Zero();
    ref.a[i] = Vec3::Zero();
    ref.q[i] = Quat::Identity();
    ref.omega[i] = Vec3::Zero();
    ref.alpha[i] = Vec3::Zero();
    ref.u[i] = Vec4::Constant(hover_thrust(m));
  }
  return ref;
}

QuadState random_state(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  QuadState s;
  s.p = Vec3(n(rng), n(rng), n(rng));
  s.v = Vec3(n(rng), n(rng), n(rng));
  s.q = Quat(n(rng), n(rng), n(rng), n(rng)).normalized();
  s.omega = 3.0 * Vec3(n(rng), n(rng), n(rng));
  return s;
}

QuadState integrate(QuadState s, const Vec4& u, double dt, int steps,
                    const QuadModel& m) {
  for (int k = 0; k < steps; ++k) s = sim::step_dynamics(s, u, dt, m, k);
  return s;
}

double state_gap(const QuadState& a, const QuadState& b) {
  Eigen::Matrix<double, 13, 1> d;
  d << a.p - b.p, a.v - b.v, a.q.coeffs() - b.q.coeffs(), a.omega - b.omega;
  return d.norm();
}

// Slow straight flight whose motor thrusts stay inside the bounds.
flat::FullTrajectory slow_reference(const QuadModel& m) {
  const auto p = path::plan_path({{Vec3::Zero(), Vec3(2, 1, 0.5)}});
  std::vector<double> h(p.size()), yaw(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double x = static_cast<double>(i) / (p.size() - 1);
    h[i] = 0.5 + 0.5 * std::sin(3.0 * x);
    yaw[i] = 0.3 * x;
  }
  return flat::recover_trajectory(p, flat::SpeedYawProfile::from_yaw(h, yaw), m);
}

}  // namespace

TEST(StepDynamics, HoverIsAnEquilibrium) {
  const QuadModel m;
  QuadState s;
  s.p = Vec3(1, 2, 3);
  const QuadState end = integrate(s, Vec4::Constant(hover_thrust(m)), 1e-3, 1000, m);
  EXPECT_LE(state_gap(end, s), 1e-9);
}

TEST(StepDynamics, FreeFallFromRest) {
  const QuadModel m;
  const double dt = 1e-3;
  const QuadState s = sim::step_dynamics(QuadState{}, Vec4::Zero(), dt, m);
  EXPECT_NEAR(s.v.z(), -9.81 * dt, 1e-9);
  EXPECT_NEAR(s.v.x(), 0.0, 1e-15);
  EXPECT_NEAR(s.p.z(), -0.5 * 9.81 * dt * dt, 1e-12);
}

TEST(StepDynamics, FourthOrderConvergence) {
  const QuadModel m;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uu(m.u_min, m.u_max);
  for (int trial = 0; trial < 5; ++trial) {
    const QuadState s = random_state(rng);
    const Vec4 u(uu(rng), uu(rng), uu(rng), uu(rng));
    const double horizon = 0.2;
    QuadState x[3];
    for (int k = 0; k < 3; ++k) {
      const int steps = 25 << k;
      x[k] = integrate(s, u, horizon / steps, steps, m);
    }
    const double slope = std::log2(state_gap(x[0], x[1]) / state_gap(x[1], x[2]));
    EXPECT_NEAR(slope, 4.0, 0.3) << "trial " << trial;
  }
}

TEST(StepDynamics, QuaternionStaysUnit) {
  const QuadModel m;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> uu(m.u_min, m.u_max);
  QuadState s = random_state(rng);
  for (int k = 0; k < 2000; ++k) {
    s = sim::step_dynamics(s, Vec4(uu(rng), uu(rng), uu(rng), uu(rng)), 1e-3, m, k);
    ASSERT_NEAR(s.q.norm(), 1.0, 1e-9);
  }
}

TEST(StepDynamics, InputIsClampedAtTheMotors) {
  const QuadModel m;
  std::mt19937_64 rng(8);
  const QuadState s = random_state(rng);
  const Vec4 wild(-1.0, 5.0, 0.5 * m.u_max, 2.0);
  const QuadState a = sim::step_dynamics(s, wild, 1e-3, m);
  const QuadState b = sim::step_dynamics(s, sim::saturate(wild, m), 1e-3, m);
  EXPECT_EQ(state_gap(a, b), 0.0);
}

TEST(StepDynamics, FaultsCarryTheStepIndex) {
  const QuadModel m;
  QuadState s;
  s.v.x() = std::numeric_limits<double>::quiet_NaN();
  try {
    sim::step_dynamics(s, Vec4::Zero(), 1e-3, m, 17);
    FAIL() << "expected a fault";
  } catch (const SimulationFault& f) {
    EXPECT_EQ(f.step(), 17);
  }
  EXPECT_THROW(sim::step_dynamics(QuadState{}, Vec4::Zero(), 0.0, m), InputError);
}

TEST(Se3Control, ZeroErrorAtHover) {
  const QuadModel m;
  const auto ref = hover_reference(m, Vec3(0, 0, 1), 1.0, 2);
  const Vec4 u = sim::se3_control(sim::state_row(ref, 0), sim::reference_row(ref, 0),
                                  sim::ControllerGains{}, m);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(u(i), hover_thrust(m), 1e-12);
  const Vec4 wrench = m.mixer() * u;
  EXPECT_NEAR(wrench.tail<3>().norm(), 0.0, 1e-15);
}

TEST(Se3Control, ClimbsWhenBelowReference) {
  const QuadModel m;
  const auto ref = hover_reference(m, Vec3(0, 0, 1), 1.0, 2);
  QuadState s = sim::state_row(ref, 0);
  s.p += Vec3(0, 0, -0.1);
  const Vec4 u = sim::se3_control(s, sim::reference_row(ref, 0), sim::ControllerGains{}, m);
  EXPECT_GT(u.sum(), m.mass * kGravity);
}

TEST(Se3Control, FeedforwardIsTheFixedPoint) {
  const QuadModel m;
  const auto ref = slow_reference(m);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    ASSERT_TRUE((ref.u[i].array() > m.u_min).all() && (ref.u[i].array() < m.u_max).all());
    const Vec4 u = sim::se3_control(sim::state_row(ref, i), sim::reference_row(ref, i),
                                    sim::ControllerGains{}, m);
    EXPECT_LE((u - ref.u[i]).cwiseAbs().maxCoeff(), 1e-6) << "row " << i;
  }
}

TEST(Se3Control, ZeroForceFallsBackToUpright) {
  const QuadModel m;
  sim::ReferencePoint r;
  r.a = m.gravity;
  const Vec4 u = sim::se3_control(QuadState{}, r, sim::ControllerGains{}, m);
  EXPECT_TRUE(u.allFinite());
  EXPECT_LE(u.maxCoeff(), m.u_max);
  EXPECT_GE(u.minCoeff(), m.u_min);
}

TEST(SimulateTracking, HoverReference) {
  const QuadModel m;
  const auto ref = hover_reference(m, Vec3(1, -1, 2), 1.0, 21);
  const auto res = sim::simulate_tracking(ref, sim::ControllerGains{}, m);
  ASSERT_FALSE(res.crashed);
  ASSERT_EQ(res.actual.size(), ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    EXPECT_LE((res.actual.p[i] - ref.p[i]).norm(), 1e-6);
    EXPECT_EQ(res.actual.t[i], ref.t[i]);
  }
}

TEST(SimulateTracking, SaturatesOnInfeasibleDemand) {
  const QuadModel m;
  auto ref = hover_reference(m, Vec3::Zero(), 1.0, 21);
  // A 50 m/s^2 step upward, far above what four motors can produce.
  for (std::size_t i = 1; i < ref.size(); ++i) {
    const double t = ref.t[i];
    ref.a[i] = Vec3(0, 0, 50.0);
    ref.v[i] = Vec3(0, 0, 50.0 * t);
    ref.p[i] = Vec3(0, 0, 25.0 * t * t);
  }
  const auto res = sim::simulate_tracking(ref, sim::ControllerGains{}, m);
  bool saturated = false;
  double early = 0.0, late = 0.0;
  for (std::size_t i = 0; i < res.actual.size(); ++i) {
    const Vec4& u = res.actual.u[i];
    EXPECT_GE(u.minCoeff(), m.u_min);
    EXPECT_LE(u.maxCoeff(), m.u_max);
    saturated |= u.maxCoeff() == m.u_max;
    const double dev = (res.actual.p[i] - ref.p[i]).norm();
    if (i == 2) early = dev;
    late = dev;
  }
  EXPECT_TRUE(saturated);
  EXPECT_GT(late, early);
}

TEST(SimulateTracking, StraightToppReference) {
  topp::ToppProblem p;
  p.path = path::plan_path({{Vec3::Zero(), Vec3(2, 0, 0)}});
  const auto sol = topp::solve_topp(p);
  ASSERT_TRUE(sol.diagnostics.converged);
  const auto ref = flat::recover_trajectory(p.path, sol.profile, p.model);
  const auto res = sim::simulate_tracking(ref, sim::ControllerGains{}, p.model);
  ASSERT_FALSE(res.crashed);
  EXPECT_LE(eval::max_deviation(p.path, res.actual), 0.15);
}

TEST(SimulateTracking, DeterministicAndLoggedThrustsInBounds) {
  const QuadModel m;
  const auto ref = slow_reference(m);
  const auto a = sim::simulate_tracking(ref, sim::ControllerGains{}, m);
  const auto b = sim::simulate_tracking(ref, sim::ControllerGains{}, m);
  ASSERT_EQ(a.actual.size(), b.actual.size());
  for (std::size_t i = 0; i < a.actual.size(); ++i) {
    EXPECT_EQ(a.actual.p[i], b.actual.p[i]);
    EXPECT_EQ(a.actual.q[i].coeffs(), b.actual.q[i].coeffs());
    EXPECT_EQ(a.actual.u[i], b.actual.u[i]);
    EXPECT_GE(a.actual.u[i].minCoeff(), m.u_min);
    EXPECT_LE(a.actual.u[i].maxCoeff(), m.u_max);
    EXPECT_NEAR(a.actual.q[i].norm(), 1.0, 1e-9);
  }
}

TEST(SimulateTracking, CrashesAboveSpeedCeiling) {
  const QuadModel m;
  // Tracking a 3 s free fall ends near 29 m/s, above 4 * v_max.
  auto ref = hover_reference(m, Vec3::Zero(), 3.0, 31);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double t = ref.t[i];
    ref.a[i] = m.gravity;
    ref.v[i] = m.gravity * t;
    ref.p[i] = 0.5 * m.gravity * t * t;
  }
  const auto res = sim::simulate_tracking(ref, sim::ControllerGains{}, m);
  EXPECT_TRUE(res.crashed);
  EXPECT_GE(res.fault_step, 0);
  EXPECT_LT(res.actual.size(), ref.size());
  EXPECT_FALSE(res.reason.empty());
}

TEST(SimulateTracking, RejectsBadInputs) {
  const QuadModel m;
  const auto ref = hover_reference(m, Vec3::Zero(), 1.0, 21);
  EXPECT_THROW(sim::simulate_tracking(ref, sim::ControllerGains{}, m, 0.02), InputError);
  auto bad = ref;
  bad.t[3] = bad.t[2];
  EXPECT_THROW(sim::simulate_tracking(bad, sim::ControllerGains{}, m), InputError);
  sim::ControllerGains g;
  g.k_R = 0.0;
  EXPECT_THROW(sim::simulate_tracking(ref, g, m), InputError);
}

TEST(ControllerGains, JsonRoundTrip) {
  sim::ControllerGains g;
  g.k_p = 3.25;
  g.k_omega = 10.0;
  const std::string text = sim::gains_to_json_text(g);
  const auto back = sim::gains_from_json_text(text);
  EXPECT_EQ(back.k_p, g.k_p);
  EXPECT_EQ(back.k_v, g.k_v);
  EXPECT_EQ(back.k_R, g.k_R);
  EXPECT_EQ(back.k_omega, g.k_omega);
  EXPECT_EQ(sim::gains_to_json_text(back), text);
  EXPECT_THROW(sim::gains_from_json_text(R"({"k_v": -1})"), InputError);
  EXPECT_THROW(sim::gains_from_json_text("{"), InputError);
}
