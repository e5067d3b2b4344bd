#pragma once

#include "toppkit/flat_recovery.hpp"
#include "toppkit/quad_model.hpp"
#include "toppkit/types.hpp"

#include <string>

// Rigid-body quadrotor simulation with motor saturation and an SE(3)
// geometric tracking controller.
namespace toppkit::sim {

inline constexpr double kDefaultDt = 1e-3;

struct QuadState {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Quat q = Quat::Identity();
  Vec3 omega = Vec3::Zero();  // body frame

  bool finite() const;
};

// Attitude gains act as angular-acceleration gains (they are multiplied by J).
struct ControllerGains {
  double k_p = 6.5;        // 1/s^2
  double k_v = 4.0;        // 1/s
  double k_R = 544.0;      // 1/s^2
  double k_omega = 46.64;  // 1/s

  void validate() const;
};

ControllerGains load_gains(const std::string& file);
ControllerGains gains_from_json_text(const std::string& text);
std::string gains_to_json_text(const ControllerGains& gains);

struct ReferencePoint {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
  Quat q = Quat::Identity();
  Vec3 omega = Vec3::Zero();
  Vec3 alpha = Vec3::Zero();
};

ReferencePoint reference_row(const flat::FullTrajectory& traj, std::size_t i);
QuadState state_row(const flat::FullTrajectory& traj, std::size_t i);

// Clamps u to [u_min, u_max].
Vec4 saturate(const Vec4& u, const QuadModel& model);

struct StateDerivative {
  Vec3 dp, dv;
  Vec4 dq;  // (w, x, y, z)
  Vec3 domega;
};

// Continuous dynamics for already-saturated motor thrusts.
StateDerivative dynamics(const QuadState& s, const Vec4& u,
                         const QuadModel& model);

// One RK4 step; u is clamped at the motors and q renormalized. Throws
// SimulationFault(step) if the result is not finite.
QuadState step_dynamics(const QuadState& state, const Vec4& u, double dt,
                        const QuadModel& model, long step = 0);

// Motor thrusts from the geometric tracking law, clamped to bounds.
Vec4 se3_control(const QuadState& state, const ReferencePoint& ref,
                 const ControllerGains& gains, const QuadModel& model);

struct SimResult {
  // Sampled at the reference timestamps; truncated after a crash.
  flat::FullTrajectory actual;
  bool crashed = false;
  long fault_step = -1;  // integration step of the crash, -1 if none
  std::string reason;
};

// Starts at reference row 0 and holds row i over [t_i, t_{i+1}). Each
// interval is split into ceil((t_{i+1} - t_i) / dt) equal steps.
SimResult simulate_tracking(const flat::FullTrajectory& ref,
                            const ControllerGains& gains,
                            const QuadModel& model, double dt = kDefaultDt);

}  // namespace toppkit::sim
