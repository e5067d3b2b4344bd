#pragma once

#include "toppkit/types.hpp"

#include <string>

namespace toppkit {

// Vehicle parameters for an 'x'-configuration quadrotor. Rotors 1..4 sit at
// arm_length / sqrt(2) * (+1,+1), (+1,-1), (-1,-1), (-1,+1) in the body x/y
// plane and spin in directions (+1, -1, +1, -1); the reaction torque of rotor
// i is drag_coefficient * u_i about body z. Defaults are CrazyFlie 2.0.
struct QuadModel {
  double mass = 0.03;                                   // kg
  Vec3 inertia = Vec3(1.43e-5, 1.43e-5, 2.89e-5);       // kg m^2 (diagonal)
  double arm_length = 0.043;                            // m
  double drag_coefficient = 7.8e-10 / 2.3e-8;           // m (k_m / k_eta)
  double u_min = 0.0;                                   // N per motor
  double u_max = 0.14375;                               // N per motor
  Vec3 gravity = Vec3(0.0, 0.0, -kGravity);             // m/s^2, world frame

  double v_max = 5.0;      // m/s
  double omega_max = 20.0; // rad/s
  double a_max = 20.0;     // m/s^2

  Mat3 inertia_matrix() const { return inertia.asDiagonal(); }

  // [f_c, tau_x, tau_y, tau_z] = mixer() * u
  Mat4 mixer() const;
  Mat4 mixer_inverse() const;

  // Throws InputError on violated invariants (m > 0, J > 0, u_min < u_max,
  // |g| = 9.81, positive limits, invertible mixer).
  void validate() const;
};

// Loads a model from JSON; missing keys keep the defaults above.
QuadModel load_quad_model(const std::string& file);
QuadModel quad_model_from_json_text(const std::string& text);
std::string quad_model_to_json_text(const QuadModel& model);

// Defaults shipped in config/quad_crazyflie.json.
QuadModel crazyflie_model();

}  // namespace toppkit
