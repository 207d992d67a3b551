#pragma once

#include <array>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "pfs/error.hpp"
#include "pfs/sim/types.hpp"

namespace pfs::control {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Planar 3R arm in the x-z plane of the goal frame. The tool frame at the
/// end of link 3 is the part frame: link 3 points along the part's -z axis,
/// so the part orientation is theta = q1 + q2 + q3 + pi/2.
///
/// Links are uniform rods. The payload (part plus gripper) is a point mass
/// with rotational inertia at the tool frame; it dominates the dynamics by
/// default so that the Cartesian response is close to isotropic.
struct ArmConfig {
  double base_x = -0.35, base_z = 0.25;
  std::array<double, 3> length{0.30, 0.30, 0.05};
  std::array<double, 3> link_mass{0.01, 0.01, 0.005};
  double payload_mass = 0.45;      ///< kg
  double payload_inertia = 4.5e-4; ///< kg m^2

  void validate() const {
    for (int i = 0; i < 3; ++i) {
      if (!(length[static_cast<std::size_t>(i)] > 0)) throw ConfigError("arm: link lengths must be > 0");
      if (!(link_mass[static_cast<std::size_t>(i)] >= 0)) throw ConfigError("arm: link masses must be >= 0");
    }
    if (!(payload_mass > 0) || !(payload_inertia > 0)) throw ConfigError("arm: payload mass and inertia must be > 0");
  }
};

struct ArmState {
  Vec3 q = Vec3::Zero();
  Vec3 qd = Vec3::Zero();

  friend bool operator==(const ArmState&, const ArmState&) = default;
};

namespace detail {

/// Absolute angles of the three links.
inline Vec3 link_angles(const Vec3& q) { return {q[0], q[0] + q[1], q[0] + q[1] + q[2]}; }

}  // namespace detail

/// Tool frame pose in the goal frame.
inline Pose tool_pose(const ArmConfig& a, const Vec3& q) {
  const Vec3 phi = detail::link_angles(q);
  double x = a.base_x, z = a.base_z;
  for (int i = 0; i < 3; ++i) {
    x += a.length[static_cast<std::size_t>(i)] * std::cos(phi[i]);
    z += a.length[static_cast<std::size_t>(i)] * std::sin(phi[i]);
  }
  return {x, z, normalize_angle(phi[2] + std::numbers::pi / 2)};
}

/// Tool Jacobian: rows (x, z, theta), columns joints.
inline Mat3 jacobian(const ArmConfig& a, const Vec3& q) {
  const Vec3 phi = detail::link_angles(q);
  Mat3 J;
  for (int j = 0; j < 3; ++j) {
    double dx = 0.0, dz = 0.0;
    for (int i = j; i < 3; ++i) {
      dx -= a.length[static_cast<std::size_t>(i)] * std::sin(phi[i]);
      dz += a.length[static_cast<std::size_t>(i)] * std::cos(phi[i]);
    }
    J(0, j) = dx;
    J(1, j) = dz;
    J(2, j) = 1.0;
  }
  return J;
}

/// Joint-space inertia of the rods and the payload at configuration q.
inline Mat3 inertia(const ArmConfig& a, const Vec3& q) {
  const Vec3 phi = detail::link_angles(q);
  Mat3 H = Mat3::Zero();
  for (int i = 0; i < 3; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    // Center-of-mass Jacobian of rod i and its angular Jacobian.
    Eigen::Matrix<double, 2, 3> Jc = Eigen::Matrix<double, 2, 3>::Zero();
    Eigen::RowVector3d Jw = Eigen::RowVector3d::Zero();
    for (int j = 0; j <= i; ++j) {
      Jw[j] = 1.0;
      for (int l = j; l <= i; ++l) {
        const double r = (l == i ? 0.5 : 1.0) * a.length[static_cast<std::size_t>(l)];
        Jc(0, j) -= r * std::sin(phi[l]);
        Jc(1, j) += r * std::cos(phi[l]);
      }
    }
    const double m = a.link_mass[ui], L = a.length[ui];
    H += m * Jc.transpose() * Jc + (m * L * L / 12.0) * Jw.transpose() * Jw;
  }
  const Mat3 J = jacobian(a, q);
  const Vec3 payload(a.payload_mass, a.payload_mass, a.payload_inertia);
  H += J.transpose() * payload.asDiagonal() * J;
  return H;
}

/// Tool pose and twist, with joint rates given per unit of time.
inline std::pair<Pose, Twist> forward_kinematics(const ArmConfig& a, const ArmState& s, double rate_scale = 1.0) {
  const Vec3 v = jacobian(a, s.q) * s.qd * rate_scale;
  return {tool_pose(a, s.q), Twist{v[0], v[1], v[2]}};
}

/// Joint angles placing the tool frame at `pose`, elbow up. Throws
/// ConfigError when the pose is out of reach.
inline Vec3 inverse_kinematics(const ArmConfig& a, const Pose& pose) {
  const double phi3 = pose.theta - std::numbers::pi / 2;
  const double wx = pose.x - a.length[2] * std::cos(phi3) - a.base_x;
  const double wz = pose.z - a.length[2] * std::sin(phi3) - a.base_z;
  const double l1 = a.length[0], l2 = a.length[1];
  const double c2 = (wx * wx + wz * wz - l1 * l1 - l2 * l2) / (2 * l1 * l2);
  if (!(c2 > -1.0 && c2 < 1.0)) throw ConfigError("inverse_kinematics: pose out of reach");
  const double q2 = -std::acos(c2);
  const double q1 = std::atan2(wz, wx) - std::atan2(l2 * std::sin(q2), l1 + l2 * std::cos(q2));
  return {q1, q2, phi3 - q1 - q2};
}

}  // namespace pfs::control
