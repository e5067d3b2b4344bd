#include "toppkit/quad_model.hpp"

#include "toppkit/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace toppkit {

using nlohmann::json;

Mat4 QuadModel::mixer() const {
  const double d = arm_length * std::sqrt(0.5);
  const double k = drag_coefficient;
  // Rotor positions (x, y): (+d,+d), (+d,-d), (-d,-d), (-d,+d).
  // Torque of a thrust u at r: r x (0, 0, u) = (r_y u, -r_x u, 0).
  Mat4 m;
  m << 1.0, 1.0, 1.0, 1.0,   //
      d, -d, -d, d,          //
      -d, -d, d, d,          //
      k, -k, k, -k;
  return m;
}

Mat4 QuadModel::mixer_inverse() const {
  Eigen::FullPivLU<Mat4> lu(mixer());
  if (!lu.isInvertible()) {
    throw InputError("QuadModel: singular mixer (check arm_length and "
                     "drag_coefficient)");
  }
  return lu.inverse();
}

void QuadModel::validate() const {
  if (!(mass > 0.0)) throw InputError("QuadModel: mass must be > 0");
  if (!(inertia.minCoeff() > 0.0)) {
    throw InputError("QuadModel: inertia must be positive diagonal");
  }
  if (!(u_min < u_max)) throw InputError("QuadModel: need u_min < u_max");
  if (std::abs(gravity.norm() - kGravity) > 1e-6) {
    throw InputError("QuadModel: |g| must equal 9.81");
  }
  if (!(v_max > 0.0) || !(omega_max > 0.0) || !(a_max > 0.0)) {
    throw InputError("QuadModel: limits must be positive");
  }
  if (!(arm_length > 0.0) || !(drag_coefficient > 0.0)) {
    throw InputError("QuadModel: singular mixer (check arm_length and "
                     "drag_coefficient)");
  }
  mixer_inverse();
}

QuadModel quad_model_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("quad model: ") + e.what());
  }
  QuadModel m;
  auto vec3 = [](const json& v) {
    if (!v.is_array() || v.size() != 3) {
      throw InputError("quad model: expected a 3-vector");
    }
    return Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
  };
  try {
    if (j.contains("mass")) m.mass = j["mass"].get<double>();
    if (j.contains("inertia")) m.inertia = vec3(j["inertia"]);
    if (j.contains("arm_length")) m.arm_length = j["arm_length"].get<double>();
    if (j.contains("drag_coefficient")) {
      m.drag_coefficient = j["drag_coefficient"].get<double>();
    }
    if (j.contains("u_min")) m.u_min = j["u_min"].get<double>();
    if (j.contains("u_max")) m.u_max = j["u_max"].get<double>();
    if (j.contains("gravity")) m.gravity = vec3(j["gravity"]);
    if (j.contains("v_max")) m.v_max = j["v_max"].get<double>();
    if (j.contains("omega_max")) m.omega_max = j["omega_max"].get<double>();
    if (j.contains("a_max")) m.a_max = j["a_max"].get<double>();
  } catch (const json::exception& e) {
    throw InputError(std::string("quad model: ") + e.what());
  }
  m.validate();
  return m;
}

QuadModel load_quad_model(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw InputError("cannot open quad model file: " + file);
  std::stringstream buf;
  buf << in.rdbuf();
  return quad_model_from_json_text(buf.str());
}

std::string quad_model_to_json_text(const QuadModel& m) {
  json j;
  j["mass"] = m.mass;
  j["inertia"] = {m.inertia.x(), m.inertia.y(), m.inertia.z()};
  j["arm_length"] = m.arm_length;
  j["drag_coefficient"] = m.drag_coefficient;
  j["u_min"] = m.u_min;
  j["u_max"] = m.u_max;
  j["gravity"] = {m.gravity.x(), m.gravity.y(), m.gravity.z()};
  j["v_max"] = m.v_max;
  j["omega_max"] = m.omega_max;
  j["a_max"] = m.a_max;
  return j.dump(2);
}

QuadModel crazyflie_model() { return QuadModel{}; }

}  // namespace toppkit
