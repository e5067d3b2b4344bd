#pragma once

#include "toppkit/path_gen.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace oracle {

using toppkit::path::WaypointList;

// Coefficient of t^k in the d-th derivative of t^k-monomials, evaluated at t.
inline double mono_deriv(int k, int d, double t) {
  if (k < d) return 0.0;
  double c = 1.0;
  for (int j = 0; j < d; ++j) c *= k - j;
  return c * std::pow(t, k - d);
}

// Independent min-snap oracle: per-segment monomials in tau = t / T_k,
// interpolation + C1..C3 continuity + rest ends as equality constraints, and
// the snap integral replaced by composite Simpson on a 1000-interval grid.
// Extra rows pin chosen junction derivatives (for the optimality check).
struct Pin {
  std::size_t junction;  // interior waypoint index
  int derivative;
  double value;
};

struct OracleResult {
  double cost = 0.0;
  std::vector<Eigen::VectorXd> coeffs;  // per axis, 8 * m
};

inline OracleResult snap_oracle(const WaypointList& w, const std::vector<double>& T,
                         int axis_mask = 7, const std::vector<Pin>& pins = {},
                         int pin_axis = 0) {
  const std::size_t m = T.size();
  const int nc = 8;
  const int n = static_cast<int>(nc * m);
  const int grid = 1000;

  // Physical-time derivative d of monomial c on segment k at tau.
  auto phys = [&](std::size_t k, int c, int d, double tau) {
    return mono_deriv(c, d, tau) / std::pow(T[k], d);
  };

  // Quadratic form of the Simpson rule over each segment's own grid.
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t k = 0; k < m; ++k) {
    const double h = 1.0 / grid;
    for (int g = 0; g <= grid; ++g) {
      const double tau = g * h;
      const double wgt = (g == 0 || g == grid) ? 1.0 : (g % 2 ? 4.0 : 2.0);
      Eigen::VectorXd row = Eigen::VectorXd::Zero(nc);
      for (int c = 0; c < nc; ++c) row(c) = phys(k, c, 4, tau);
      Q.block(nc * k, nc * k, nc, nc) +=
          (wgt * h * T[k] / 3.0) * row * row.transpose();
    }
  }

  OracleResult out;
  double total = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    if (!(axis_mask & (1 << axis))) continue;
    std::vector<Eigen::VectorXd> rows;
    std::vector<double> rhs;
    auto add = [&](std::size_t seg, int d, double tau, double sign,
                   Eigen::VectorXd& r) {
      for (int c = 0; c < nc; ++c) r(nc * seg + c) += sign * phys(seg, c, d, tau);
    };
    for (int d = 0; d <= 3; ++d) {
      Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
      add(0, d, 0.0, 1.0, r);
      rows.push_back(r);
      rhs.push_back(d == 0 ? w.points.front()(axis) : 0.0);
      Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
      add(m - 1, d, 1.0, 1.0, e);
      rows.push_back(e);
      rhs.push_back(d == 0 ? w.points.back()(axis) : 0.0);
    }
    for (std::size_t j = 1; j < m; ++j) {
      Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
      add(j - 1, 0, 1.0, 1.0, r);
      rows.push_back(r);
      rhs.push_back(w.points[j](axis));
      for (int d = 0; d <= 3; ++d) {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
        add(j - 1, d, 1.0, 1.0, c);
        add(j, d, 0.0, -1.0, c);
        rows.push_back(c);
        rhs.push_back(0.0);
      }
    }
    if (axis == pin_axis) {
      for (const Pin& p : pins) {
        Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
        add(p.junction, p.derivative, 0.0, 1.0, r);
        rows.push_back(r);
        rhs.push_back(p.value);
      }
    }
    const int nr = static_cast<int>(rows.size());
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + nr, n + nr);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n + nr);
    K.topLeftCorner(n, n) = 2.0 * Q;
    for (int i = 0; i < nr; ++i) {
      K.block(n + i, 0, 1, n) = rows[i].transpose();
      K.block(0, n + i, n, 1) = rows[i];
      b(n + i) = rhs[i];
    }
    // Symmetric Ruiz equilibration; segment costs scale as T^-7.
    Eigen::VectorXd D = Eigen::VectorXd::Ones(n + nr);
    for (int it = 0; it < 20; ++it) {
      const Eigen::MatrixXd S = D.asDiagonal() * K * D.asDiagonal();
      for (int i = 0; i < n + nr; ++i) {
        const double r = S.row(i).cwiseAbs().maxCoeff();
        if (r > 0.0) D(i) /= std::sqrt(r);
      }
    }
    const Eigen::MatrixXd Ks = D.asDiagonal() * K * D.asDiagonal();
    const Eigen::VectorXd sol =
        D.asDiagonal() * Ks.fullPivLu().solve(D.asDiagonal() * b);
    const Eigen::VectorXd x = sol.head(n);
    out.coeffs.push_back(x);
    total += x.dot(Q * x);
  }
  out.cost = total;
  return out;
}

// Value of time derivative d of segment k of the oracle solution at local
// time t in [0, T_k].
inline double oracle_eval(const Eigen::VectorXd& x, const std::vector<double>& T,
                          std::size_t k, int d, double t) {
  double v = 0.0;
  for (int c = 0; c < 8; ++c) v += x(8 * k + c) * mono_deriv(c, d, t / T[k]);
  return v / std::pow(T[k], d);
}

}  // namespace oracle
