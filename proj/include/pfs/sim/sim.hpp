#pragma once

#include <cmath>
#include <random>
#include <string>

#include "pfs/detail/text.hpp"
#include "pfs/error.hpp"
#include "pfs/sim/config.hpp"
#include "pfs/sim/contact.hpp"
#include "pfs/sim/types.hpp"

namespace pfs {

namespace detail {

inline std::string describe(const SimState& s, const Wrench& w) {
  using detail::format_double;
  return "pose=(" + format_double(s.pose.x) + "," + format_double(s.pose.z) + "," +
         format_double(s.pose.theta) + ") twist=(" + format_double(s.twist.vx) + "," +
         format_double(s.twist.vz) + "," + format_double(s.twist.omega) + ") applied=(" +
         format_double(w.fx) + "," + format_double(w.fz) + "," + format_double(w.tau) + ") t=" +
         format_double(s.t);
}

}  // namespace detail

/// Advances the part by one sample period `cfg.dt` using `cfg.substeps`
/// semi-implicit Euler substeps. The returned state carries the contact
/// wrench evaluated at the new pose.
inline SimState step(const SimState& state, const Wrench& applied, const SimConfig& cfg) {
  if (!is_finite(state.pose) || !is_finite(state.twist) || !is_finite(applied) ||
      !std::isfinite(state.t))
    throw NumericError("sim step: non-finite input " + detail::describe(state, applied));

  const double h = cfg.dt / cfg.substeps;
  Pose p = state.pose;
  Twist v = state.twist;
  for (int i = 0; i < cfg.substeps; ++i) {
    const Wrench f = contact_resolve(p, v, cfg);
    const double ax = (applied.fx + f.fx - cfg.lin_damping * v.vx) / cfg.mass;
    const double az = (applied.fz + f.fz - cfg.lin_damping * v.vz) / cfg.mass;
    const double aw = (applied.tau + f.tau - cfg.rot_damping * v.omega) / cfg.rot_inertia;
    v.vx += ax * h;
    v.vz += az * h;
    v.omega += aw * h;
    p.x += v.vx * h;
    p.z += v.vz * h;
    p.theta = normalize_angle(p.theta + v.omega * h);
  }

  SimState next;
  next.pose = p;
  next.twist = v;
  next.t = state.t + cfg.dt;
  next.contact_wrench = contact_resolve(p, v, cfg, &next.in_contact);
  if (!is_finite(next.pose) || !is_finite(next.twist) || !is_finite(next.contact_wrench))
    throw NumericError("sim step: state diverged from " + detail::describe(state, applied));
  return next;
}

/// Positional distance to the goal; orientation is not included.
inline double goal_distance(const Pose& pose) { return std::hypot(pose.x, pose.z); }
inline double goal_distance(const SimState& s) { return goal_distance(s.pose); }

inline double kinetic_energy(const Twist& v, const SimConfig& c) {
  return 0.5 * c.mass * (v.vx * v.vx + v.vz * v.vz) + 0.5 * c.rot_inertia * v.omega * v.omega;
}

/// State at a given pose at rest, with its contact wrench filled in.
inline SimState make_state(const Pose& pose, const SimConfig& cfg, double t = 0.0) {
  SimState s;
  s.pose = pose;
  s.t = t;
  s.contact_wrench = contact_resolve(pose, s.twist, cfg, &s.in_contact);
  return s;
}

/// Throws ConfigError when some pose of the start box could touch the
/// environment.
inline void check_start_box(const SimConfig& cfg) {
  const double lowest = cfg.start_z_min - cfg.part_half_width * std::sin(std::min(cfg.start_theta_range, 1.5707963267948966));
  const double top = cfg.goal_offset_z + cfg.hole_depth;
  if (cfg.start_theta_range >= 1.5707963267948966 || lowest <= top)
    throw ConfigError("start box overlaps the environment: lowest corner z=" +
                      detail::format_double(lowest) + " is not above the surface z=" +
                      detail::format_double(top));
}

/// Uniform start pose from the configured box, at rest, at t = 0.
template <class Rng>
SimState random_start(const SimConfig& cfg, Rng& rng) {
  check_start_box(cfg);
  auto draw = [&rng](double lo, double hi) {
    if (!(hi > lo)) return 0.5 * (lo + hi);
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Pose p;
    p.x = draw(-cfg.start_x_range, cfg.start_x_range);
    p.z = draw(cfg.start_z_min, cfg.start_z_max);
    p.theta = draw(-cfg.start_theta_range, cfg.start_theta_range);
    SimState s = make_state(p, cfg);
    if (!s.in_contact) return s;
  }
  throw ConfigError("random_start: could not draw a contact-free pose");
}

}  // namespace pfs
