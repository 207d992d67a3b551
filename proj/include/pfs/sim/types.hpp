#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace pfs {

/// Planar pose of the steered part in the goal frame. The part origin is the
/// center of its insertion face; `z` is the insertion axis.
struct Pose {
  double x = 0.0;      ///< lateral [m]
  double z = 0.0;      ///< insertion axis [m]
  double theta = 0.0;  ///< [rad], kept in (-pi, pi]

  friend bool operator==(const Pose&, const Pose&) = default;
};

struct Twist {
  double vx = 0.0;     ///< [m/s]
  double vz = 0.0;     ///< [m/s]
  double omega = 0.0;  ///< [rad/s]

  friend bool operator==(const Twist&, const Twist&) = default;
};

/// Planar force-torque vector (fx, fz, tau).
struct Wrench {
  double fx = 0.0;   ///< [N]
  double fz = 0.0;   ///< [N]
  double tau = 0.0;  ///< [N m]

  static constexpr int dim = 3;

  double operator[](int i) const { return i == 0 ? fx : (i == 1 ? fz : tau); }
  double& operator[](int i) { return i == 0 ? fx : (i == 1 ? fz : tau); }

  std::array<double, 3> to_array() const { return {fx, fz, tau}; }
  static Wrench from_array(const std::array<double, 3>& a) { return {a[0], a[1], a[2]}; }

  friend Wrench operator+(const Wrench& a, const Wrench& b) {
    return {a.fx + b.fx, a.fz + b.fz, a.tau + b.tau};
  }
  friend Wrench operator-(const Wrench& a) { return {-a.fx, -a.fz, -a.tau}; }
  friend Wrench operator*(double s, const Wrench& w) { return {s * w.fx, s * w.fz, s * w.tau}; }
  friend bool operator==(const Wrench&, const Wrench&) = default;
};

struct SimState {
  Pose pose;
  Twist twist;
  Wrench contact_wrench;  ///< environment reaction acting on the part
  double t = 0.0;         ///< [s]
  bool in_contact = false;

  friend bool operator==(const SimState&, const SimState&) = default;
};

/// Wrap an angle into (-pi, pi].
inline double normalize_angle(double a) {
  constexpr double pi = std::numbers::pi;
  if (a > pi || a <= -pi) {
    a = std::remainder(a, 2.0 * pi);
    if (a <= -pi) a += 2.0 * pi;
  }
  return a;
}

/// Per-axis clamp to +-limits.
inline Wrench clamp_wrench(const Wrench& w, const Wrench& limits) {
  return {std::clamp(w.fx, -limits.fx, limits.fx), std::clamp(w.fz, -limits.fz, limits.fz),
          std::clamp(w.tau, -limits.tau, limits.tau)};
}

inline bool is_finite(const Pose& p) {
  return std::isfinite(p.x) && std::isfinite(p.z) && std::isfinite(p.theta);
}
inline bool is_finite(const Twist& v) {
  return std::isfinite(v.vx) && std::isfinite(v.vz) && std::isfinite(v.omega);
}
inline bool is_finite(const Wrench& w) {
  return std::isfinite(w.fx) && std::isfinite(w.fz) && std::isfinite(w.tau);
}

}  // namespace pfs
