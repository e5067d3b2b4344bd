#include "toppkit/errors.hpp"
#include "toppkit/eval_metrics.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace toppkit;

namespace {

path::DiscretizedPath straight(int n, double length) {
  path::DiscretizedPath p;
  p.ds = length / (n - 1);
  for (int i = 0; i < n; ++i) {
    p.s.push_back(p.ds * i);
    p.gamma.emplace_back(p.ds * i, 0.0, 0.0);
    p.dgamma.emplace_back(1.0, 0.0, 0.0);
    p.ddgamma.emplace_back(0.0, 0.0, 0.0);
  }
  return p;
}

// Helix of radius R and rise c per radian, at radius r_eval and angle phi.
Vec3 helix_point(double r_eval, double c, double phi) {
  return Vec3(r_eval * std::cos(phi), r_eval * std::sin(phi), c * phi);
}

path::DiscretizedPath helix(double R, double c, double turns, int n) {
  const double rate = std::hypot(R, c);  // arc length per radian
  const double phi_end = 2.0 * std::numbers::pi * turns;
  path::DiscretizedPath p;
  p.ds = rate * phi_end / (n - 1);
  for (int i = 0; i < n; ++i) {
    const double phi = phi_end * i / (n - 1);
    p.s.push_back(p.ds * i);
    p.gamma.push_back(helix_point(R, c, phi));
    p.dgamma.push_back(Vec3(-R * std::sin(phi), R * std::cos(phi), c) / rate);
    p.ddgamma.push_back(Vec3(-R * std::cos(phi), -R * std::sin(phi), 0.0) /
                        (rate * rate));
  }
  return p;
}

flat::FullTrajectory positions(const Vec3List& pts) {
  flat::FullTrajectory t;
  t.resize(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    t.t[i] = 0.1 * i;
    t.p[i] = pts[i];
  }
  return t;
}

}  // namespace

TEST(MaxDeviation, OnPathIsZero) {
  const auto p = straight(11, 5.0);
  EXPECT_EQ(eval::max_deviation(p, positions(p.gamma)), 0.0);
  EXPECT_EQ(eval::max_deviation(p, positions({Vec3(1.23, 0, 0), Vec3(4.9, 0, 0)})), 0.0);
}

TEST(MaxDeviation, ConstantOffset) {
  const auto p = straight(11, 5.0);
  Vec3List shifted;
  for (const Vec3& g : p.gamma) shifted.push_back(g + Vec3(0, 0, 0.2));
  EXPECT_NEAR(eval::max_deviation(p, positions(shifted)), 0.2, 1e-15);
}

TEST(MaxDeviation, HelixRadialShift) {
  const double R = 2.0, c = 0.3, d = 0.1;
  const int n = 100;
  const auto p = helix(R, c, 1.5, n);
  const double curvature = R / (R * R + c * c);
  const double phi_end = 3.0 * std::numbers::pi;
  Vec3List shifted;
  // Station angles and angles halfway between stations.
  for (int i = 0; i < 2 * n - 1; ++i) {
    shifted.push_back(helix_point(R + d, c, phi_end * i / (2.0 * (n - 1))));
  }
  const double dev = eval::max_deviation(p, positions(shifted));
  EXPECT_NEAR(dev, d, p.ds * p.ds * curvature);
  EXPECT_GE(dev, d);
}

TEST(MaxDeviation, TranslationInvariant) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  const auto base = helix(1.5, 0.2, 1.0, 60);
  Vec3List pts;
  for (int i = 0; i < 40; ++i) pts.push_back(base.gamma[i] + 0.3 * Vec3(n(rng), n(rng), n(rng)));
  const Vec3 shift(3.0, -7.0, 11.0);
  auto moved = base;
  for (Vec3& g : moved.gamma) g += shift;
  Vec3List moved_pts;
  for (const Vec3& q : pts) moved_pts.push_back(q + shift);
  EXPECT_NEAR(eval::max_deviation(base, positions(pts)),
              eval::max_deviation(moved, positions(moved_pts)), 1e-12);
}

TEST(MaxDeviation, EmptyInputsRejected) {
  EXPECT_THROW(eval::max_deviation(straight(5, 1.0), flat::FullTrajectory{}), InputError);
  EXPECT_THROW(eval::max_deviation(path::DiscretizedPath{}, positions({Vec3::Zero()})),
               InputError);
}

TEST(ThrustViolation, InBoundsIsZero) {
  const std::vector<Vec4> u(100, Vec4(0.0, 0.05, 0.1, 0.14375));
  EXPECT_EQ(eval::thrust_violation(u, 0.0, 0.14375), 0.0);
}

TEST(ThrustViolation, SingleExcessAveragedOverAllEntries) {
  const double u_max = 0.14375;
  std::vector<Vec4> u(100, Vec4::Constant(0.07));
  u[42](2) = u_max + 0.4;
  EXPECT_DOUBLE_EQ(eval::thrust_violation(u, 0.0, u_max), 0.001);
  u[42](2) = -0.4;
  EXPECT_DOUBLE_EQ(eval::thrust_violation(u, 0.0, u_max), 0.001);
}

TEST(ThrustViolation, ZeroIffEveryEntryInBounds) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> in(0.0, 1.0), pick(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Vec4> u(20);
    bool inside = true;
    for (Vec4& row : u) {
      for (int m = 0; m < 4; ++m) {
        row(m) = in(rng);
        if (pick(rng) < 0.01) {
          row(m) = pick(rng) < 0.5 ? -1e-3 : 1.0 + 1e-3;
          inside = false;
        }
      }
    }
    EXPECT_EQ(eval::thrust_violation(u, 0.0, 1.0) == 0.0, inside);
  }
}

TEST(TdRatio, Examples) {
  EXPECT_EQ(eval::td_ratio(3.0, 3.0), 0.0);
  // Negative means the prediction is faster than the optimum.
  const double td = eval::td_ratio(5.905, 5.929);
  EXPECT_LT(td, 0.0);
  EXPECT_EQ(std::round(td * 1e4) / 1e2, -0.40);
  EXPECT_EQ(eval::td_ratio(4.0, 2.0), 1.0);
  EXPECT_THROW(eval::td_ratio(1.0, 0.0), InputError);
  EXPECT_THROW(eval::td_ratio(1.0, -2.0), InputError);
}

TEST(TdRatio, SwapRelation) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> t(0.5, 10.0);
  for (int i = 0; i < 100; ++i) {
    const double a = t(rng), b = t(rng);
    EXPECT_NEAR(eval::td_ratio(b, a), -eval::td_ratio(a, b) * b / a, 1e-12);
  }
}

TEST(ClassifyFailure, Examples) {
  EXPECT_FALSE(eval::classify_failure(false, 0.05));
  EXPECT_TRUE(eval::classify_failure(false, 1.2));
  EXPECT_TRUE(eval::classify_failure(true, 0.1));
  EXPECT_FALSE(eval::classify_failure(false, 1.0));
  EXPECT_TRUE(eval::classify_failure(false, std::nan("")));
}

TEST(ClassifyFailure, MonotoneInDeviation) {
  bool failed = false;
  for (int i = 0; i <= 300; ++i) {
    const bool f = eval::classify_failure(false, 0.01 * i);
    if (failed) EXPECT_TRUE(f);
    failed |= f;
  }
  EXPECT_TRUE(failed);
}

TEST(Evaluate, AssemblesReport) {
  QuadModel m;
  const auto p = straight(11, 5.0);
  auto planned = positions(p.gamma);
  for (auto& u : planned.u) u = Vec4::Constant(0.07);
  planned.u[3](0) = m.u_max + 0.4;
  Vec3List flown;
  for (const Vec3& g : p.gamma) flown.push_back(g + Vec3(0, 0.3, 0));
  const auto actual = positions(flown);

  const auto r = eval::evaluate(p, planned, actual, false, m, 0.8, 0.25);
  EXPECT_NEAR(r.max_deviation, 0.3, 1e-15);
  EXPECT_DOUBLE_EQ(r.thrust_violation, 0.4 / 44.0);
  EXPECT_DOUBLE_EQ(r.travel_time, 1.0);
  EXPECT_DOUBLE_EQ(r.td_ratio, 0.25);
  EXPECT_FALSE(r.failure);
  EXPECT_EQ(r.compute_time, 0.25);
  EXPECT_DOUBLE_EQ(r.path_length, 5.0);
  EXPECT_DOUBLE_EQ(r.average_speed, r.path_length / r.travel_time);

  const auto crashed = eval::evaluate(p, planned, actual, true, m);
  EXPECT_TRUE(crashed.failure);
  EXPECT_EQ(crashed.td_ratio, 0.0);

  const auto j = nlohmann::json::parse(eval::report_to_json_text(r));
  for (const char* key : {"max_deviation", "thrust_violation", "td_ratio", "failure",
                          "travel_time", "compute_time", "path_length", "average_speed"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["td_ratio"].get<double>(), r.td_ratio);
}
