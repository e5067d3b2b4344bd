#include "toppkit/topp_solver.hpp"

#include "toppkit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace toppkit::topp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Per-point inequality constraints g <= 0, scaled to O(1).
constexpr int kNumConstraints = 11;
constexpr int kAccel = 0;
constexpr int kOmega = 1;
constexpr int kThrustMax = 2;   // 4 entries
constexpr int kThrustMin = 6;   // 4 entries
constexpr int kTilt = 10;       // b3_z >= 0

// Values of the flat recovery chain at every station. Kept as structure of
// arrays so a finite-difference probe only rewrites a short index window.
struct Chain {
  std::vector<double> h, sq, yaw, hp, b3z, dt, cost;
  Vec3List a, omega, alpha;
  std::vector<Quat> q;
  std::vector<Vec4> u;
  std::vector<std::uint8_t> ok_q, ok_w;

  explicit Chain(std::size_t n)
      : h(n), sq(n), yaw(n), hp(n), b3z(n), dt(n > 0 ? n - 1 : 0), cost(n),
        a(n), omega(n), alpha(n), q(n), u(n), ok_q(n), ok_w(n) {}

  void copy_range(const Chain& from, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i <= hi; ++i) {
      h[i] = from.h[i];
      sq[i] = from.sq[i];
      yaw[i] = from.yaw[i];
      hp[i] = from.hp[i];
      b3z[i] = from.b3z[i];
      cost[i] = from.cost[i];
      a[i] = from.a[i];
      omega[i] = from.omega[i];
      alpha[i] = from.alpha[i];
      q[i] = from.q[i];
      u[i] = from.u[i];
      ok_q[i] = from.ok_q[i];
      ok_w[i] = from.ok_w[i];
      if (i < dt.size()) dt[i] = from.dt[i];
    }
  }
};

struct Range {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

class Evaluator {
 public:
  explicit Evaluator(const ToppProblem& problem)
      : path_(problem.path),
        model_(problem.model),
        lambda_(problem.lambda),
        n_(problem.path.size()),
        minv_(problem.model.mixer_inverse()),
        span_(problem.model.u_max - problem.model.u_min),
        mu_(n_ * kNumConstraints, 0.0) {}

  std::size_t size() const { return n_; }
  double rho() const { return rho_; }
  void set_rho(double rho) { rho_ = rho; }
  const std::vector<double>& multipliers() const { return mu_; }

  void update_accel_attitude(Chain& c, std::size_t i) const {
    c.hp[i] = flat::speed_derivative_at(c.h, path_.ds, i);
    c.a[i] = flat::acceleration_at(path_.dgamma[i], path_.ddgamma[i], c.h[i],
                                   c.hp[i]);
    const Vec3 force = flat::thrust_vector(c.a[i], model_);
    const double norm = force.norm();
    c.b3z[i] = norm > 0.0 ? force.z() / norm : -1.0;
    c.ok_q[i] = flat::try_attitude(c.a[i], c.yaw[i], model_, c.q[i]) ? 1 : 0;
  }

  void update_omega(Chain& c, std::size_t i) const {
    if (i + 1 == n_) {
      c.omega[i] = c.omega[i - 1];
      c.ok_w[i] = c.ok_w[i - 1];
      return;
    }
    Vec3 spatial = Vec3::Zero();
    const bool ok = c.ok_q[i] && c.ok_q[i + 1] &&
                    flat::try_spatial_rate(c.q[i], c.q[i + 1], path_.ds,
                                           spatial);
    c.ok_w[i] = ok ? 1 : 0;
    c.omega[i] = c.sq[i] * spatial;
  }

  void update_dt(Chain& c, std::size_t i) const {
    const double denom = c.sq[i] + c.sq[i + 1];
    c.dt[i] = denom > 0.0 ? 2.0 * path_.ds / denom : kInf;
  }

  void update_alpha(Chain& c, std::size_t i) const {
    if (i == 0) {
      c.alpha[0] = (c.omega[1] - c.omega[0]) / c.dt[0];
    } else if (i + 1 == n_) {
      c.alpha[i] = (c.omega[i] - c.omega[i - 1]) / c.dt[i - 1];
    } else {
      c.alpha[i] = flat::nonuniform_derivative(
          c.omega[i - 1], c.omega[i], c.omega[i + 1], c.dt[i - 1], c.dt[i]);
    }
  }

  void constraint_values(const Chain& c, std::size_t i,
                         double g[kNumConstraints]) const {
    g[kAccel] = (c.a[i].norm() - model_.a_max) / model_.a_max;
    g[kOmega] = (c.omega[i].norm() - model_.omega_max) / model_.omega_max;
    for (int m = 0; m < 4; ++m) {
      g[kThrustMax + m] = (c.u[i](m) - model_.u_max) / span_;
      g[kThrustMin + m] = (model_.u_min - c.u[i](m)) / span_;
    }
    g[kTilt] = -c.b3z[i];
  }

  // Native-unit violation of point i (m/s^2, rad/s, N, dimensionless tilt).
  double native_violation(const Chain& c, std::size_t i) const {
    if (!c.ok_q[i] || !c.ok_w[i]) return kInf;
    double v = std::max(0.0, c.a[i].norm() - model_.a_max);
    v = std::max(v, c.omega[i].norm() - model_.omega_max);
    for (int m = 0; m < 4; ++m) {
      v = std::max(v, c.u[i](m) - model_.u_max);
      v = std::max(v, model_.u_min - c.u[i](m));
    }
    v = std::max(v, -c.b3z[i]);
    return std::isfinite(v) ? v : kInf;
  }

  void update_cost(Chain& c, std::size_t i) const {
    c.u[i] = flat::motor_thrusts(c.a[i], c.omega[i], c.alpha[i], model_, minv_);
    if (!c.ok_q[i] || !c.ok_w[i]) {
      c.cost[i] = kInf;
      return;
    }
    double g[kNumConstraints];
    constraint_values(c, i, g);
    double s = lambda_ * c.alpha[i].squaredNorm();
    const double* mu = &mu_[i * kNumConstraints];
    for (int k = 0; k < kNumConstraints; ++k) {
      const double shifted = mu[k] + rho_ * g[k];
      const double active = shifted > 0.0 ? shifted : 0.0;
      s += (active * active - mu[k] * mu[k]) / (2.0 * rho_);
    }
    c.cost[i] = std::isfinite(s) ? s : kInf;
  }

  void evaluate_all(Chain& c) const {
    for (std::size_t i = 0; i < n_; ++i) update_accel_attitude(c, i);
    for (std::size_t i = 0; i < n_; ++i) update_omega(c, i);
    for (std::size_t i = 0; i + 1 < n_; ++i) update_dt(c, i);
    for (std::size_t i = 0; i < n_; ++i) update_alpha(c, i);
    for (std::size_t i = 0; i < n_; ++i) update_cost(c, i);
  }

  // Recompute the chain after h_j changed; returns the touched range.
  Range repair_after_h(Chain& c, std::size_t j) const {
    const std::size_t last = n_ - 1;
    std::size_t qlo = j > 0 ? j - 1 : 0;
    std::size_t qhi = std::min(last, j + 1);
    if (j <= 2) qlo = 0;
    if (j + 3 >= n_) qhi = last;
    for (std::size_t i = qlo; i <= qhi; ++i) update_accel_attitude(c, i);
    const std::size_t wlo = qlo > 0 ? qlo - 1 : 0;
    std::size_t whi = qhi;
    if (whi + 2 >= n_) whi = last;
    for (std::size_t i = wlo; i <= whi; ++i) update_omega(c, i);
    const std::size_t dlo = j > 0 ? j - 1 : 0;
    const std::size_t dhi = std::min(j, n_ - 2);
    for (std::size_t i = dlo; i <= dhi; ++i) update_dt(c, i);
    const std::size_t alo = std::min(wlo > 0 ? wlo - 1 : 0, dlo);
    const std::size_t ahi = std::min(last, std::max(whi + 1, dhi + 1));
    for (std::size_t i = alo; i <= ahi; ++i) update_alpha(c, i);
    for (std::size_t i = alo; i <= ahi; ++i) update_cost(c, i);
    return {alo, ahi};
  }

  Range repair_after_yaw(Chain& c, std::size_t j) const {
    const std::size_t last = n_ - 1;
    update_accel_attitude(c, j);
    const std::size_t wlo = j > 0 ? j - 1 : 0;
    std::size_t whi = j;
    if (whi + 2 >= n_) whi = last;
    for (std::size_t i = wlo; i <= whi; ++i) update_omega(c, i);
    const std::size_t alo = wlo > 0 ? wlo - 1 : 0;
    const std::size_t ahi = std::min(last, whi + 1);
    for (std::size_t i = alo; i <= ahi; ++i) update_alpha(c, i);
    for (std::size_t i = alo; i <= ahi; ++i) update_cost(c, i);
    return {alo, ahi};
  }

  double time(const Chain& c) const {
    double T = 0.0;
    for (double d : c.dt) T += d;
    return T;
  }

  double penalty_sum(const Chain& c) const {
    double s = 0.0;
    for (const Vec3& al : c.alpha) s += al.squaredNorm();
    return s;
  }

  double merit(const Chain& c) const {
    double m = time(c);
    for (double v : c.cost) m += v;
    return std::isfinite(m) ? m : kInf;
  }

  double max_violation(const Chain& c) const {
    double v = 0.0;
    for (std::size_t i = 0; i < n_; ++i) v = std::max(v, native_violation(c, i));
    return v;
  }

  void update_multipliers(const Chain& c) {
    double g[kNumConstraints];
    for (std::size_t i = 0; i < n_; ++i) {
      constraint_values(c, i, g);
      double* mu = &mu_[i * kNumConstraints];
      for (int k = 0; k < kNumConstraints; ++k) {
        const double next = std::max(0.0, mu[k] + rho_ * g[k]);
        mu[k] = std::isfinite(next) ? next : mu[k];
      }
    }
  }

 private:
  const path::DiscretizedPath& path_;
  const QuadModel& model_;
  double lambda_;
  std::size_t n_;
  Mat4 minv_;
  double span_;
  std::vector<double> mu_;
  double rho_ = 10.0;
};

// Decision vector: sigma_1..sigma_{N-2} (h = sigma^2) then one yaw per
// station group. Body rates scale with sqrt(h), so a rotation out of a station
// at rest never shows up in omega or alpha; when the start is at rest the
// first two stations therefore share one yaw.
class Variables {
 public:
  struct Group {
    std::size_t lo, hi;
  };

  Variables(const ToppProblem& problem)
      : n_(problem.path.size()),
        v_max_(problem.model.v_max),
        theta_lo_(problem.theta0_min),
        theta_hi_(problem.theta0_max),
        h_start_(problem.boundary.start * problem.boundary.start),
        h_end_(problem.boundary.end * problem.boundary.end) {
    std::size_t j = 0;
    if (h_start_ == 0.0) {
      groups_.push_back({0, 1});
      j = 2;
    }
    for (; j < n_; ++j) groups_.push_back({j, j});
  }

  std::size_t dim() const { return num_sigma() + groups_.size(); }
  const std::vector<Group>& yaw_groups() const { return groups_; }

  double lower(Eigen::Index i) const {
    const auto k = static_cast<std::size_t>(i);
    if (k < num_sigma()) return 0.0;
    return k == num_sigma() ? theta_lo_ : -kInf;
  }
  double upper(Eigen::Index i) const {
    const auto k = static_cast<std::size_t>(i);
    if (k < num_sigma()) return v_max_;
    return k == num_sigma() ? theta_hi_ : kInf;
  }
  std::size_t num_sigma() const { return n_ - 2; }

  Eigen::VectorXd from_profile(const flat::SpeedYawProfile& p) const {
    Eigen::VectorXd x(dim());
    for (std::size_t j = 1; j + 1 < n_; ++j) x(j - 1) = std::sqrt(p.h[j]);
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      x(num_sigma() + g) = p.yaw[groups_[g].lo];
    }
    project(x);
    return x;
  }

  void project(Eigen::VectorXd& x) const {
    for (std::size_t k = 0; k < num_sigma(); ++k) {
      x(k) = std::clamp(x(k), 0.0, v_max_);
    }
    x(num_sigma()) = std::clamp(x(num_sigma()), theta_lo_, theta_hi_);
  }

  void load(const Eigen::VectorXd& x, Chain& c) const {
    c.h[0] = h_start_;
    c.h[n_ - 1] = h_end_;
    for (std::size_t j = 1; j + 1 < n_; ++j) c.h[j] = x(j - 1) * x(j - 1);
    for (std::size_t j = 0; j < n_; ++j) c.sq[j] = std::sqrt(c.h[j]);
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      for (std::size_t j = groups_[g].lo; j <= groups_[g].hi; ++j) {
        c.yaw[j] = x(num_sigma() + g);
      }
    }
  }

  flat::SpeedYawProfile profile(const Eigen::VectorXd& x) const {
    Chain c(n_);
    load(x, c);
    return flat::SpeedYawProfile::from_yaw(c.h, c.yaw);
  }

 private:
  std::size_t n_;
  double v_max_, theta_lo_, theta_hi_, h_start_, h_end_;
  std::vector<Group> groups_;
};

class Solver {
 public:
  Solver(const ToppProblem& problem, const SolverOptions& options)
      : problem_(problem),
        options_(options),
        eval_(problem),
        vars_(problem),
        n_(problem.path.size()),
        base_(n_),
        work_(n_) {}

  // Merit at x; leaves base_ holding the chain of x.
  double merit_at(const Eigen::VectorXd& x) {
    vars_.load(x, base_);
    eval_.evaluate_all(base_);
    return eval_.merit(base_);
  }

  // Merit gradient and a Gauss-Newton Hessian at the point held in base_.
  // Both come from one forward-difference sweep: each probe rewrites a short
  // window of the chain, whose cost change gives the gradient entry and whose
  // alpha / constraint changes give a Jacobian column. The Hessian combines
  // the exact Hessian of T in sigma with J^T W J of the squared terms
  // (lambda |alpha|^2 and the active penalty terms).
  void linearize(Eigen::VectorXd& grad, Eigen::MatrixXd& hess) {
    const std::size_t ns = vars_.num_sigma();
    const auto dim = static_cast<Eigen::Index>(vars_.dim());
    const double ds = problem_.path.ds;
    const double step = options_.fd_step;
    const double lambda = problem_.lambda;
    const double rho = eval_.rho();
    const std::vector<double>& mu = eval_.multipliers();
    constexpr int kRows = 3 + kNumConstraints;

    work_ = base_;
    grad.setZero(dim);
    hess.setZero(dim, dim);
    jac_.setZero(static_cast<Eigen::Index>(kRows * n_), dim);
    windows_.resize(static_cast<std::size_t>(dim));

    // Row weights: 2 lambda for alpha rows, rho for active constraint rows.
    weights_.setZero(static_cast<Eigen::Index>(kRows * n_));
    base_g_.resize(n_ * kNumConstraints);
    for (std::size_t i = 0; i < n_; ++i) {
      eval_.constraint_values(base_, i, &base_g_[i * kNumConstraints]);
      const auto row = static_cast<Eigen::Index>(i * kRows);
      weights_.segment<3>(row).setConstant(2.0 * lambda);
      for (int k = 0; k < kNumConstraints; ++k) {
        const std::size_t idx = i * kNumConstraints + k;
        if (mu[idx] + rho * base_g_[idx] > 0.0) weights_(row + 3 + k) = rho;
      }
    }

    // The cost gradient is assembled from the probed Jacobian columns rather
    // than differenced directly: with a large rho the cost curvature makes a
    // forward difference of the cost itself point uphill.
    double g_work[kNumConstraints];
    auto probe = [&](Eigen::Index col, Range r, double chain) {
      double dc = 0.0;
      for (std::size_t i = r.lo; i <= r.hi; ++i) {
        const auto row = static_cast<Eigen::Index>(i * kRows);
        const Vec3 da = (work_.alpha[i] - base_.alpha[i]) * (chain / step);
        if (da.allFinite()) {
          jac_.block<3, 1>(row, col) = da;
          dc += 2.0 * lambda * base_.alpha[i].dot(da);
        }
        eval_.constraint_values(work_, i, g_work);
        for (int k = 0; k < kNumConstraints; ++k) {
          const std::size_t idx = i * kNumConstraints + k;
          const double dg = (g_work[k] - base_g_[idx]) * (chain / step);
          if (!std::isfinite(dg)) continue;
          jac_(row + 3 + k, col) = dg;
          const double shifted = mu[idx] + rho * base_g_[idx];
          if (shifted > 0.0) dc += shifted * dg;
        }
      }
      if (!std::isfinite(dc)) dc = 0.0;
      windows_[static_cast<std::size_t>(col)] = r;
      return dc;
    };

    for (std::size_t k = 0; k < ns; ++k) {
      const std::size_t j = k + 1;
      const auto col = static_cast<Eigen::Index>(k);
      const double sigma = base_.sq[j];
      const double left = base_.sq[j - 1] + sigma;
      const double right = sigma + base_.sq[j + 1];
      double grad_t = 0.0;
      double curv_left = 0.0;
      double curv_right = 0.0;
      if (left > 0.0) {
        grad_t -= 2.0 * ds / (left * left);
        curv_left = 4.0 * ds / (left * left * left);
      }
      if (right > 0.0) {
        grad_t -= 2.0 * ds / (right * right);
        curv_right = 4.0 * ds / (right * right * right);
      }
      // A step of fd_step in h; near rest that is a large relative change of
      // sigma, so below sigma = 0.5 m/s the step is taken in sigma instead.
      const double dsig = std::min(step, step / (2.0 * sigma));
      const double sig_probe = sigma + dsig;
      work_.h[j] = sig_probe * sig_probe;
      work_.sq[j] = std::sqrt(work_.h[j]);
      const Range r = eval_.repair_after_h(work_, j);
      const double dc_dsig = probe(col, r, step / dsig);
      grad(col) = grad_t + dc_dsig;
      // d2T/dsigma2 plus the curvature of h = sigma^2 when it is convex.
      double h_curv = 0.0;
      if (sigma > 1e-3) h_curv = std::max(0.0, dc_dsig / sigma);
      hess(col, col) += curv_left + curv_right + h_curv;
      if (k + 1 < ns) {
        hess(col, col + 1) += curv_right;
        hess(col + 1, col) += curv_right;
      }
      work_.copy_range(base_, r.lo, r.hi);
      work_.h[j] = base_.h[j];
      work_.sq[j] = base_.sq[j];
    }
    const auto& groups = vars_.yaw_groups();
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto col = static_cast<Eigen::Index>(ns + g);
      const std::size_t lo = groups[g].lo, hi = groups[g].hi;
      for (std::size_t j = lo; j <= hi; ++j) work_.yaw[j] = base_.yaw[j] + step;
      Range r{n_, 0};
      for (std::size_t j = lo; j <= hi; ++j) {
        const Range rj = eval_.repair_after_yaw(work_, j);
        r.lo = std::min(r.lo, rj.lo);
        r.hi = std::max(r.hi, rj.hi);
      }
      grad(col) = probe(col, r, 1.0);
      work_.copy_range(base_, r.lo, r.hi);
      for (std::size_t j = lo; j <= hi; ++j) work_.yaw[j] = base_.yaw[j];
    }

    // J^T W J restricted to column pairs with overlapping windows.
    for (Eigen::Index a = 0; a < dim; ++a) {
      const Range ra = windows_[static_cast<std::size_t>(a)];
      for (Eigen::Index b = a; b < dim; ++b) {
        const Range rb = windows_[static_cast<std::size_t>(b)];
        const std::size_t lo = std::max(ra.lo, rb.lo);
        const std::size_t hi = std::min(ra.hi, rb.hi);
        if (lo > hi) continue;
        const auto r0 = static_cast<Eigen::Index>(lo * kRows);
        const auto len = static_cast<Eigen::Index>((hi - lo + 1) * kRows);
        const double v = (jac_.col(a).segment(r0, len).cwiseProduct(
                              weights_.segment(r0, len)))
                             .dot(jac_.col(b).segment(r0, len));
        hess(a, b) += v;
        if (b != a) hess(b, a) += v;
      }
    }
  }

  double projected_gradient_norm(const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& g) const {
    Eigen::VectorXd trial = x - g;
    vars_.project(trial);
    return (trial - x).lpNorm<Eigen::Infinity>();
  }

  struct InnerResult {
    int iterations = 0;
    bool stationary = false;
  };

  // Projected Newton iterations on the Gauss-Newton model: variables held at
  // a bound by their gradient are frozen, the damped model is solved on the
  // free ones, and the step is projected and accepted by Armijo backtracking
  // along the projection arc.
  InnerResult minimize(Eigen::VectorXd& x, double pg_tol, double kappa,
                       int max_iter, std::vector<double>* history) {
    InnerResult res;
    const Eigen::Index ns = static_cast<Eigen::Index>(vars_.num_sigma());
    const Eigen::VectorXd anchor = x;
    auto prox = [&](const Eigen::VectorXd& y) {
      return 0.5 * kappa *
             (y.tail(y.size() - ns) - anchor.tail(y.size() - ns)).squaredNorm();
    };
    double f = merit_at(x) + prox(x);
    if (!std::isfinite(f)) return res;
    if (history) history->push_back(f);
    const Eigen::Index dim = x.size();
    Eigen::VectorXd g(dim), d(dim), x_new(dim);
    Eigen::MatrixXd H(dim, dim);
    double damping = 1e-6;
    int stalled = 0;
    for (int it = 0; it < max_iter; ++it) {
      linearize(g, H);
      for (Eigen::Index i = ns; i < dim; ++i) {
        g(i) += kappa * (x(i) - anchor(i));
        H(i, i) += kappa;
      }
      if (projected_gradient_norm(x, g) <= pg_tol) {
        res.stationary = true;
        break;
      }
      std::vector<Eigen::Index> free;
      free.reserve(static_cast<std::size_t>(dim));
      for (Eigen::Index i = 0; i < dim; ++i) {
        const bool at_lo = x(i) <= vars_.lower(i) && g(i) > 0.0;
        const bool at_hi = x(i) >= vars_.upper(i) && g(i) < 0.0;
        if (!at_lo && !at_hi) free.push_back(i);
      }
      const auto nf = static_cast<Eigen::Index>(free.size());
      if (nf == 0) {
        res.stationary = true;
        break;
      }
      Eigen::MatrixXd Hf(nf, nf);
      Eigen::VectorXd gf(nf);
      double diag_scale = 0.0;
      for (Eigen::Index a = 0; a < nf; ++a) {
        gf(a) = g(free[static_cast<std::size_t>(a)]);
        for (Eigen::Index b = 0; b < nf; ++b) {
          Hf(a, b) = H(free[static_cast<std::size_t>(a)],
                       free[static_cast<std::size_t>(b)]);
        }
        diag_scale = std::max(diag_scale, Hf(a, a));
      }
      diag_scale = std::max(diag_scale, 1e-12);

      bool accepted = false;
      double f_new = kInf;
      for (int attempt = 0; attempt < 8 && !accepted; ++attempt) {
        Eigen::MatrixXd M = Hf;
        M.diagonal().array() += damping * diag_scale;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
        Eigen::VectorXd df = ldlt.solve(-gf);
        if (ldlt.info() != Eigen::Success || !df.allFinite() ||
            !(gf.dot(df) < 0.0)) {
          df = -gf / diag_scale;
        }
        d.setZero();
        for (Eigen::Index a = 0; a < nf; ++a) {
          d(free[static_cast<std::size_t>(a)]) = df(a);
        }
        double t = 1.0;
        for (int ls = 0; ls < 30; ++ls) {
          x_new = x + t * d;
          vars_.project(x_new);
          const double decrease = g.dot(x_new - x);
          if (decrease < 0.0) {
            f_new = merit_at(x_new) + prox(x_new);
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * decrease) {
              accepted = true;
              break;
            }
          }
          t *= 0.5;
        }
        if (accepted) {
          if (t == 1.0) damping = std::max(1e-10, damping / 4.0);
          else if (t < 0.25) damping = std::min(1e3, damping * 4.0);
        } else {
          damping = std::min(1e6, damping * 100.0);
        }
      }
      if (!accepted) {
        // Damping scaled by the largest diagonal starves weakly curved
        // variables (yaw next to stiff penalty rows); try each variable on
        // its own diagonal scale.
        d.setZero();
        for (Eigen::Index a = 0; a < nf; ++a) {
          const double hd = std::max(Hf(a, a), 1e-12 * diag_scale);
          d(free[static_cast<std::size_t>(a)]) = -gf(a) / hd;
        }
        double t = 1.0;
        for (int ls = 0; ls < 40 && !accepted; ++ls) {
          x_new = x + t * d;
          vars_.project(x_new);
          const double decrease = g.dot(x_new - x);
          if (decrease < 0.0) {
            f_new = merit_at(x_new) + prox(x_new);
            accepted = std::isfinite(f_new) && f_new <= f + 1e-4 * decrease;
          }
          t *= 0.5;
        }
      }
      ++res.iterations;
      if (!accepted) {
        merit_at(x);  // restore base_ to x
        res.stationary = true;
        break;
      }
      const double rel_drop = (f - f_new) / std::max(1.0, std::abs(f));
      x = x_new;
      f = f_new;
      if (history) history->push_back(f);
      stalled = rel_drop < 1e-12 ? stalled + 1 : 0;
      if (stalled >= 3) {
        res.stationary = true;
        break;
      }
    }
    return res;
  }

  ToppSolution run() {
    Diagnostics diag;
    const flat::SpeedYawProfile init =
        options_.initial_guess.has_value()
            ? *options_.initial_guess
            : solve_convex_init(problem_, options_.init_thrust_fraction);
    if (init.size() != n_) {
      throw InputError("solve_topp: initial guess length mismatch");
    }
    Eigen::VectorXd x = vars_.from_profile(init);

    eval_.set_rho(options_.initial_penalty);
    double prev_violation = kInf;
    double prev_objective = kInf;

    Eigen::VectorXd best_x = x;
    double best_violation = kInf;
    double best_objective = kInf;
    auto consider = [&](const Eigen::VectorXd& cand, double viol, double obj) {
      const bool cand_ok = viol <= options_.tolerance;
      const bool best_ok = best_violation <= options_.tolerance;
      bool take = false;
      if (cand_ok && !best_ok) take = true;
      if (cand_ok && best_ok && obj < best_objective) take = true;
      if (!cand_ok && !best_ok && viol < best_violation) take = true;
      if (take) {
        best_x = cand;
        best_violation = viol;
        best_objective = obj;
      }
    };

    for (int outer = 0; outer < options_.max_outer; ++outer) {
      std::vector<double>* history = nullptr;
      if (options_.record_merit) {
        diag.merit_history.emplace_back();
        history = &diag.merit_history.back();
      }
      const double pg_tol = std::max(1e-7, 1e-3 / std::pow(4.0, outer));
      const InnerResult inner = minimize(x, pg_tol, options_.yaw_proximal,
                                         options_.max_inner, history);
      diag.iterations += inner.iterations;
      diag.outer_iterations = outer + 1;

      merit_at(x);
      const double viol = eval_.max_violation(base_);
      const double obj =
          eval_.time(base_) + problem_.lambda * eval_.penalty_sum(base_);
      consider(x, viol, obj);

      const bool feasible = viol <= options_.tolerance;
      const bool settled =
          std::abs(obj - prev_objective) <= 1e-7 * std::max(1.0, obj);
      if (feasible && (settled || (inner.stationary && pg_tol <= 1e-6))) {
        diag.converged = true;
        break;
      }
      eval_.update_multipliers(base_);
      if (viol > 0.25 * prev_violation) {
        eval_.set_rho(std::min(eval_.rho() * 10.0, options_.max_penalty));
      }
      prev_violation = viol;
      prev_objective = obj;
    }

    if (!diag.converged) {
      diag.converged = best_violation <= options_.tolerance &&
                       diag.outer_iterations < options_.max_outer;
    }
    merit_at(best_x);
    ToppSolution sol;
    sol.profile = vars_.profile(best_x);
    sol.T = eval_.time(base_);
    sol.objective = sol.T + problem_.lambda * eval_.penalty_sum(base_);
    diag.max_violation = eval_.max_violation(base_);
    sol.diagnostics = std::move(diag);
    return sol;
  }

 private:
  const ToppProblem& problem_;
  SolverOptions options_;
  Evaluator eval_;
  Variables vars_;
  std::size_t n_;
  Chain base_;
  Chain work_;
  Eigen::MatrixXd jac_;
  Eigen::VectorXd weights_;
  std::vector<double> base_g_;
  std::vector<Range> windows_;
};

}  // namespace

void ToppProblem::validate() const {
  path.validate();
  model.validate();
  if (!(lambda >= 0.0)) throw InputError("ToppProblem: lambda must be >= 0");
  if (!(boundary.start >= 0.0) || !(boundary.end >= 0.0)) {
    throw InputError("ToppProblem: boundary speeds must be >= 0");
  }
  if (boundary.start > model.v_max || boundary.end > model.v_max) {
    throw InputError("ToppProblem: boundary speed exceeds v_max");
  }
  if (!(theta0_min <= theta0_max)) {
    throw InputError("ToppProblem: empty starting-yaw interval");
  }
}

flat::SpeedYawProfile solve_convex_init(const ToppProblem& problem,
                                        double init_thrust_fraction) {
  problem.validate();
  const path::DiscretizedPath& path = problem.path;
  const QuadModel& model = problem.model;
  const std::size_t n = path.size();
  const double ds = path.ds;

  const double thrust_margin =
      4.0 * model.u_max / model.mass - model.gravity.norm();
  double a_bound = model.a_max;
  if (thrust_margin > 0.0) {
    a_bound = std::min(a_bound, init_thrust_fraction * thrust_margin);
  }
  const double v2 = model.v_max * model.v_max;

  std::vector<double> kappa(n), cap(n);
  for (std::size_t i = 0; i < n; ++i) {
    kappa[i] = path.ddgamma[i].norm();
    cap[i] = v2;
    if (kappa[i] > 0.0) cap[i] = std::min(cap[i], a_bound / kappa[i]);
  }
  auto tangential = [&](std::size_t i, double h) {
    const double normal = kappa[i] * h;
    return std::sqrt(std::max(0.0, a_bound * a_bound - normal * normal));
  };

  std::vector<double> h(cap);
  h[0] = std::min(problem.boundary.start * problem.boundary.start, cap[0]);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i + 1] = std::min(cap[i + 1], h[i] + 2.0 * ds * tangential(i, h[i]));
  }
  h[n - 1] = std::min(h[n - 1],
                      problem.boundary.end * problem.boundary.end);
  for (std::size_t i = n - 1; i > 0; --i) {
    h[i - 1] = std::min(h[i - 1], h[i] + 2.0 * ds * tangential(i, h[i]));
  }
  const double yaw0 = 0.5 * (problem.theta0_min + problem.theta0_max);
  return flat::SpeedYawProfile::from_yaw(std::move(h),
                                         std::vector<double>(n, yaw0));
}

ToppSolution solve_topp(const ToppProblem& problem,
                        const SolverOptions& options) {
  problem.validate();
  if (problem.path.size() < 10) {
    throw InputError("solve_topp: need at least 10 path samples");
  }
  Solver solver(problem, options);
  return solver.run();
}

double ConstraintAudit::max_violation() const {
  return std::max({speed, accel, omega, thrust, yaw0});
}

ConstraintAudit audit_profile(const ToppProblem& problem,
                              const flat::SpeedYawProfile& profile) {
  ConstraintAudit audit;
  const QuadModel& m = problem.model;
  flat::FullTrajectory traj;
  try {
    traj = flat::recover_trajectory(problem.path, profile, m);
  } catch (const Error&) {
    audit.T = audit.objective = kInf;
    audit.accel = audit.omega = audit.thrust = kInf;
    return audit;
  }
  audit.T = traj.t.back();
  for (std::size_t i = 0; i < traj.size(); ++i) {
    audit.penalty += traj.alpha[i].squaredNorm();
    audit.speed = std::max(audit.speed, traj.v[i].norm() - m.v_max);
    audit.accel = std::max(audit.accel, traj.a[i].norm() - m.a_max);
    audit.omega = std::max(audit.omega, traj.omega[i].norm() - m.omega_max);
    for (int k = 0; k < 4; ++k) {
      audit.thrust = std::max(audit.thrust, traj.u[i](k) - m.u_max);
      audit.thrust = std::max(audit.thrust, m.u_min - traj.u[i](k));
    }
  }
  const double y0 = profile.yaw.front();
  audit.yaw0 = std::max({0.0, problem.theta0_min - y0, y0 - problem.theta0_max});
  audit.objective = audit.T + problem.lambda * audit.penalty;
  return audit;
}

ConsistencyResult yaw_consistency_penalty_effect(
    const std::vector<PathPair>& pairs, const QuadModel& model,
    double penalty_lambda, const SolverOptions& options) {
  ConsistencyResult result;
  result.without_penalty.lambda = 0.0;
  result.with_penalty.lambda = penalty_lambda;
  for (ConsistencyStats* stats :
       {&result.without_penalty, &result.with_penalty}) {
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      ToppProblem nominal;
      nominal.path = pairs[k].nominal;
      nominal.model = model;
      nominal.lambda = stats->lambda;
      ToppProblem perturbed = nominal;
      perturbed.path = pairs[k].perturbed;
      const ToppSolution a = solve_topp(nominal, options);
      const ToppSolution b = solve_topp(perturbed, options);
      if (!a.diagnostics.converged || !b.diagnostics.converged) {
        ++stats->failures;
        continue;
      }
      if (a.profile.size() != b.profile.size()) {
        throw InputError("yaw_consistency: pair length mismatch");
      }
      PairDelta d;
      for (std::size_t i = 0; i < a.profile.size(); ++i) {
        d.dh_max = std::max(d.dh_max, std::abs(a.profile.h[i] - b.profile.h[i]));
        d.dyaw_max =
            std::max(d.dyaw_max, std::abs(a.profile.yaw[i] - b.profile.yaw[i]));
      }
      d.dT = std::abs(a.T - b.T);
      d.dT_rel = d.dT / a.T;
      stats->pairs.push_back(d);
      stats->pair_index.push_back(k);
    }
  }
  return result;
}

}  // namespace toppkit::topp
