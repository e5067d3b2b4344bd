#include "toppkit/errors.hpp"
#include "toppkit/eval_metrics.hpp"
#include "toppkit/topp_solver.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace toppkit;
using topp::ToppProblem;

namespace {

// Closed-form minimum time of a rest-to-rest 1D double integrator with speed
// cap v and acceleration cap a.
double bang_bang_time(double length, double v, double a) {
  if (length >= v * v / a) return length / v + v / a;
  return 2.0 * std::sqrt(length / a);
}

ToppProblem straight_problem(double length, double lambda) {
  ToppProblem p;
  p.path = path::plan_path({{Vec3::Zero(), Vec3(length, 0, 0)}});
  p.model.v_max = 5.0;
  p.model.a_max = 5.0;
  p.model.u_max = 1.0;  // generous
  p.lambda = lambda;
  return p;
}

path::WaypointList random_waypoints(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  path::WaypointList w;
  for (int j = 0; j < 3; ++j) w.points.emplace_back(10 * u(rng), 10 * u(rng), 5 * u(rng));
  return w;
}

// Planar circle of radius R with exact arc-length stations.
path::DiscretizedPath circle(double R, int n) {
  path::DiscretizedPath p;
  const double length = 2.0 * std::numbers::pi * R;
  p.ds = length / (n - 1);
  for (int i = 0; i < n; ++i) {
    const double s = p.ds * i, phi = s / R;
    p.s.push_back(s);
    p.gamma.emplace_back(R * std::cos(phi), R * std::sin(phi), 0.0);
    p.dgamma.emplace_back(-std::sin(phi), std::cos(phi), 0.0);
    p.ddgamma.emplace_back(-std::cos(phi) / R, -std::sin(phi) / R, 0.0);
  }
  return p;
}

QuadModel doubled(const QuadModel& m) {
  QuadModel d = m;
  d.u_max = m.u_min + 2.0 * (m.u_max - m.u_min);
  d.a_max *= 2.0;
  d.omega_max *= 2.0;
  d.v_max *= 2.0;
  return d;
}

}  // namespace

TEST(ConvexInit, StraightLineNearBangBang) {
  const ToppProblem p = straight_problem(5.0, 0.0);
  const auto init = topp::solve_convex_init(p);
  const double T = flat::traversal_time(init.h, p.path.ds).total;
  EXPECT_NEAR(T, bang_bang_time(5.0, 5.0, 5.0), 0.05 * bang_bang_time(5.0, 5.0, 5.0));
  EXPECT_EQ(init.h.front(), 0.0);
  EXPECT_EQ(init.h.back(), 0.0);
  for (double y : init.yaw) EXPECT_DOUBLE_EQ(y, std::numbers::pi / 4);
}

TEST(ConvexInit, VanishingSpeedLimit) {
  ToppProblem p = straight_problem(5.0, 0.0);
  p.model.v_max = 1e-6;
  for (double h : topp::solve_convex_init(p).h) EXPECT_LE(h, 1e-12);
}

TEST(ConvexInit, CircleCentripetalBound) {
  ToppProblem p;
  const double R = 2.0;
  p.path = circle(R, 120);
  p.model.v_max = 5.0;
  p.model.a_max = 5.0;
  p.model.u_max = 1.0;
  const auto init = topp::solve_convex_init(p);
  const double cap = std::min(25.0, 5.0 * R);
  double peak = 0.0;
  for (double h : init.h) peak = std::max(peak, h);
  EXPECT_LE(peak, cap * (1.0 + 1e-9));
  EXPECT_GE(peak, 0.9 * cap);
}

TEST(SolveTopp, StraightLineMatchesBangBang) {
  for (double L : {2.0, 5.0, 10.0}) {
    const ToppProblem p = straight_problem(L, 0.0);
    const auto sol = topp::solve_topp(p);
    ASSERT_TRUE(sol.diagnostics.converged) << "L " << L;
    const double oracle = bang_bang_time(L, 5.0, 5.0);
    EXPECT_NEAR(sol.T, oracle, 0.05 * oracle) << "L " << L;
    EXPECT_LE(topp::audit_profile(p, sol.profile).thrust, 1e-3);
  }
}

TEST(SolveTopp, PenaltyTradesTimeForSmoothness) {
  // With lambda > 0 the optimum may be slower, but never worse in its own
  // objective than the lambda = 0 optimum.
  const ToppProblem p0 = straight_problem(5.0, 0.0);
  const ToppProblem p1 = straight_problem(5.0, topp::kDefaultLambda);
  const auto s0 = topp::solve_topp(p0);
  const auto s1 = topp::solve_topp(p1);
  ASSERT_TRUE(s0.diagnostics.converged);
  ASSERT_TRUE(s1.diagnostics.converged);
  EXPECT_GE(s1.T, s0.T - 1e-3);
  EXPECT_LE(s1.objective, topp::audit_profile(p1, s0.profile).objective + 1e-3);
  EXPECT_LE(topp::audit_profile(p1, s1.profile).penalty,
            topp::audit_profile(p1, s0.profile).penalty);
}

TEST(SolveTopp, FeasibilityAuditOnRandomPaths) {
  std::mt19937_64 rng(42);
  for (int k = 0; k < 3; ++k) {
    ToppProblem p;
    p.path = path::plan_path(random_waypoints(rng));
    const auto sol = topp::solve_topp(p);
    ASSERT_TRUE(sol.diagnostics.converged) << "path " << k;
    EXPECT_LE(sol.diagnostics.max_violation, 1e-4);
    const auto traj = flat::recover_trajectory(p.path, sol.profile, p.model);
    EXPECT_LE(eval::thrust_violation(traj.u, p.model.u_min, p.model.u_max), 1e-3);
    for (const Vec3& v : traj.v) EXPECT_LE(v.norm(), p.model.v_max + 1e-3);
    EXPECT_LE(std::sqrt(sol.profile.h.front()), 1e-6);
    EXPECT_LE(std::sqrt(sol.profile.h.back()), 1e-6);
    EXPECT_GE(sol.profile.yaw.front(), p.theta0_min - 1e-4);
    EXPECT_LE(sol.profile.yaw.front(), p.theta0_max + 1e-4);
    EXPECT_NO_THROW(sol.profile.validate());

    const auto audit = topp::audit_profile(p, sol.profile);
    EXPECT_NEAR(audit.T, sol.T, 1e-12);
    EXPECT_NEAR(audit.objective, sol.objective, 1e-9);
    EXPECT_NEAR(audit.max_violation(), sol.diagnostics.max_violation, 1e-12);
    EXPECT_GT(sol.T, 1.0);
    EXPECT_LT(sol.T, 20.0);
  }
}

TEST(SolveTopp, Deterministic) {
  std::mt19937_64 rng(5);
  ToppProblem p;
  p.path = path::plan_path(random_waypoints(rng));
  const auto a = topp::solve_topp(p);
  const auto b = topp::solve_topp(p);
  EXPECT_EQ(a.profile.h, b.profile.h);
  EXPECT_EQ(a.profile.yaw, b.profile.yaw);
  EXPECT_EQ(a.diagnostics.iterations, b.diagnostics.iterations);
}

TEST(SolveTopp, InnerMeritNonIncreasing) {
  std::mt19937_64 rng(7);
  ToppProblem p;
  p.path = path::plan_path(random_waypoints(rng));
  topp::SolverOptions opt;
  opt.record_merit = true;
  const auto sol = topp::solve_topp(p, opt);
  ASSERT_FALSE(sol.diagnostics.merit_history.empty());
  EXPECT_EQ(sol.diagnostics.merit_history.size(),
            static_cast<std::size_t>(sol.diagnostics.outer_iterations));
  for (const auto& outer : sol.diagnostics.merit_history) {
    for (std::size_t i = 1; i < outer.size(); ++i) EXPECT_LE(outer[i], outer[i - 1]);
  }
}

TEST(SolveTopp, EnlargedBoundsNeverSlower) {
  std::mt19937_64 rng(13);
  for (int k = 0; k < 2; ++k) {
    ToppProblem p;
    p.path = path::plan_path(random_waypoints(rng));
    ToppProblem q = p;
    q.model = doubled(p.model);
    topp::SolverOptions opt;
    opt.initial_guess = topp::solve_convex_init(p);
    const auto s = topp::solve_topp(p, opt);
    const auto s2 = topp::solve_topp(q, opt);
    ASSERT_TRUE(s.diagnostics.converged);
    ASSERT_TRUE(s2.diagnostics.converged);
    EXPECT_LE(s2.T, s.T + 1e-6);
  }
}

TEST(SolveTopp, BudgetExhaustionReportsBestIterate) {
  std::mt19937_64 rng(3);
  ToppProblem p;
  p.path = path::plan_path(random_waypoints(rng));
  topp::SolverOptions opt;
  opt.max_outer = 1;
  opt.max_inner = 3;
  const auto sol = topp::solve_topp(p, opt);
  EXPECT_FALSE(sol.diagnostics.converged);
  EXPECT_EQ(sol.profile.size(), p.path.size());
  EXPECT_TRUE(std::isfinite(sol.T));
}

TEST(SolveTopp, RejectsInvalidProblems) {
  ToppProblem p = straight_problem(5.0, -1.0);
  EXPECT_THROW(topp::solve_topp(p), InputError);
  p.lambda = 0.0;
  p.boundary.start = -1.0;
  EXPECT_THROW(topp::solve_topp(p), InputError);
  ToppProblem small;
  small.path = path::plan_path({{Vec3::Zero(), Vec3(1, 0, 0)}}, 1.0, 5);
  EXPECT_THROW(topp::solve_topp(small), InputError);
}

TEST(YawConsistency, IdenticalPairHasZeroDeltas) {
  std::mt19937_64 rng(19);
  const auto path = path::plan_path(random_waypoints(rng));
  const auto res = topp::yaw_consistency_penalty_effect({{path, path}}, QuadModel{});
  for (const auto* stats : {&res.without_penalty, &res.with_penalty}) {
    ASSERT_EQ(stats->pairs.size(), 1u);
    EXPECT_EQ(stats->failures, 0);
    EXPECT_EQ(stats->pairs[0].dh_max, 0.0);
    EXPECT_EQ(stats->pairs[0].dT, 0.0);
    EXPECT_EQ(stats->pairs[0].dyaw_max, 0.0);
  }
  EXPECT_EQ(res.without_penalty.lambda, 0.0);
  EXPECT_EQ(res.with_penalty.lambda, topp::kDefaultLambda);
}

TEST(YawConsistency, StraightPairKeepsConstantYaw) {
  const path::WaypointList w{{Vec3::Zero(), Vec3(4, 0, 0)}};
  const auto d = path::allocate_times(w);
  const auto nominal = path::discretize_arclength(path::fit_min_snap(w, d));
  const auto shifted = path::shift_waypoint(w, d, 0, Vec3(0.1, 0, 0)).path;
  // Motor bounds wide on both sides, so no thrust limit depends on yaw.
  QuadModel model;
  model.u_min = -1.0;
  model.u_max = 1.0;
  const auto res = topp::yaw_consistency_penalty_effect({{nominal, shifted}}, model);
  ASSERT_EQ(res.with_penalty.pairs.size(), 1u);
  EXPECT_LE(res.with_penalty.pairs[0].dyaw_max, 1e-3);

  ToppProblem p;
  p.path = nominal;
  p.model = model;
  const auto sol = topp::solve_topp(p);
  for (double y : sol.profile.yaw) EXPECT_NEAR(y, sol.profile.yaw.front(), 1e-3);
}
