#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <vector>

namespace toppkit {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Quat = Eigen::Quaterniond;

using Vec3List = std::vector<Vec3>;

inline constexpr double kGravity = 9.81;

}  // namespace toppkit
