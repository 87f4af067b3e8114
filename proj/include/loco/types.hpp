#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <string>

namespace loco {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using VecX = Eigen::VectorXd;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using MatX = Eigen::MatrixXd;
using Quat = Eigen::Quaterniond;
using Iso3 = Eigen::Isometry3d;

// Canonical foot ordering used everywhere stacked per-foot quantities appear.
enum class FootId : int { LF = 0, RF = 1, LH = 2, RH = 3 };

inline constexpr int kNumFeet = 4;
inline constexpr std::array<const char*, kNumFeet> kFootNames = {"LF", "RF",
                                                                 "LH", "RH"};

inline const char* foot_name(FootId f) {
  return kFootNames[static_cast<int>(f)];
}

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

// Intrinsic Z-Y-X (yaw-pitch-roll) Euler angles, stored as (roll, pitch, yaw)
// so that components pair with body rates (wx, wy, wz) near the upright pose.
Vec3 euler_zyx_from_rotation(const Mat3& R);
Mat3 rotation_from_euler_zyx(const Vec3& rpy);

// Quaternion exponential of a rotation vector (body-frame increment).
Quat quat_exp(const Vec3& rotvec);

double wrap_to_pi(double angle);

}  // namespace loco
