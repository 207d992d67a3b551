#pragma once

#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pfs/detail/text.hpp"
#include "pfs/error.hpp"
#include "pfs/sim/types.hpp"

namespace pfs {

/// Parameters of the planar peg-in-hole simulation. SI units throughout.
///
/// Geometry (goal frame): the hole is a slot of half-width `hole_half_width`
/// whose floor is at z = 0 and whose rim lies at z = `hole_depth`, with a
/// 45 degree chamfer of size `chamfer` on both rims. The part is a rectangle
/// of half-width `part_half_width` and height `part_height` whose origin is
/// the center of its bottom face; the goal pose is the origin.
struct SimConfig {
  double part_half_width = 0.005;
  double hole_half_width = 0.0052;
  double hole_depth = 0.010;
  double chamfer = 0.0015;
  double part_height = 0.030;

  double mass = 1.0;
  double rot_inertia = 2.0e-4;
  double lin_damping = 500.0;
  double rot_damping = 0.5;

  double contact_stiffness = 2.0e5;
  double contact_damping = 200.0;
  double friction_mu = 0.4;
  double stiction_mu = 0.6;
  double stiction_vel_eps = 0.01;

  double dt = 0.01;
  int substeps = 20;

  Wrench wrench_limits{10.0, 20.0, 0.2};

  /// Offset of the true hole from the goal frame the states are reported in.
  double goal_offset_x = 0.0;
  double goal_offset_z = 0.0;

  double success_threshold = 0.001;

  /// Start box for `random_start`.
  double start_x_range = 0.015;
  double start_z_min = 0.020;
  double start_z_max = 0.040;
  double start_theta_range = 0.3;

  double clearance() const { return hole_half_width - part_half_width; }

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(std::string("invalid sim config: ") + what);
    };
    require(part_half_width > 0 && part_height > 0, "part dimensions must be positive");
    require(clearance() > 0, "clearance (hole_half_width - part_half_width) must be positive");
    require(hole_depth > 0 && chamfer >= 0, "hole_depth > 0 and chamfer >= 0 required");
    require(mass > 0 && rot_inertia > 0, "inertias must be positive");
    require(lin_damping > 0 && rot_damping > 0, "dampings must be positive");
    require(contact_stiffness > 0 && contact_damping > 0, "contact parameters must be positive");
    require(friction_mu >= 0 && stiction_mu >= friction_mu, "need 0 <= friction_mu <= stiction_mu");
    require(stiction_vel_eps > 0, "stiction_vel_eps must be positive");
    require(dt > 0 && substeps >= 1, "dt > 0 and substeps >= 1 required");
    require(wrench_limits.fx > 0 && wrench_limits.fz > 0 && wrench_limits.tau > 0,
            "wrench limits must be positive");
    require(success_threshold > 0, "success_threshold must be positive");
    require(start_x_range >= 0 && start_theta_range >= 0 && start_z_max >= start_z_min,
            "start box extents must be non-negative");
    require(std::isfinite(goal_offset_x) && std::isfinite(goal_offset_z), "goal offset must be finite");
  }
};

namespace detail {

template <class F>
void for_each_sim_field(SimConfig& c, F&& f) {
  f("part_half_width", c.part_half_width);
  f("hole_half_width", c.hole_half_width);
  f("hole_depth", c.hole_depth);
  f("chamfer", c.chamfer);
  f("part_height", c.part_height);
  f("mass", c.mass);
  f("rot_inertia", c.rot_inertia);
  f("lin_damping", c.lin_damping);
  f("rot_damping", c.rot_damping);
  f("contact_stiffness", c.contact_stiffness);
  f("contact_damping", c.contact_damping);
  f("friction_mu", c.friction_mu);
  f("stiction_mu", c.stiction_mu);
  f("stiction_vel_eps", c.stiction_vel_eps);
  f("dt", c.dt);
  f("wrench_limit_fx", c.wrench_limits.fx);
  f("wrench_limit_fz", c.wrench_limits.fz);
  f("wrench_limit_tau", c.wrench_limits.tau);
  f("goal_offset_x", c.goal_offset_x);
  f("goal_offset_z", c.goal_offset_z);
  f("success_threshold", c.success_threshold);
  f("start_x_range", c.start_x_range);
  f("start_z_min", c.start_z_min);
  f("start_z_max", c.start_z_max);
  f("start_theta_range", c.start_theta_range);
}

}  // namespace detail

/// Canonical `key = value` text, one field per line, fixed order.
inline std::string to_text(const SimConfig& cfg) {
  SimConfig c = cfg;
  std::string out;
  detail::for_each_sim_field(c, [&](const char* key, double& v) {
    out += key;
    out += " = ";
    out += detail::format_double(v);
    out += '\n';
  });
  out += "substeps = " + std::to_string(c.substeps) + "\n";
  return out;
}

/// Parses `key = value` text. Missing keys keep their defaults; unknown keys
/// and malformed values are rejected.
inline SimConfig sim_config_from_text(const std::string& text) {
  SimConfig c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    std::string_view body = detail::trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("sim config line " + std::to_string(lineno) + ": expected key = value");
    auto key = detail::trim(body.substr(0, eq));
    auto value = detail::trim(body.substr(eq + 1));
    if (key == "substeps") {
      auto v = detail::parse_double(value);
      if (!v || *v < 1 || *v != static_cast<int>(*v))
        throw ConfigError("sim config line " + std::to_string(lineno) + ": substeps must be a positive integer");
      c.substeps = static_cast<int>(*v);
      continue;
    }
    bool found = false;
    detail::for_each_sim_field(c, [&](const char* k, double& field) {
      if (key != k) return;
      auto v = detail::parse_double(value);
      if (!v)
        throw ConfigError("sim config line " + std::to_string(lineno) + ": bad number for " + std::string(key));
      field = *v;
      found = true;
    });
    if (!found) throw ConfigError("sim config line " + std::to_string(lineno) + ": unknown key '" + std::string(key) + "'");
  }
  c.validate();
  return c;
}

inline SimConfig load_sim_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open sim config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return sim_config_from_text(ss.str());
}

inline void save_sim_config(const SimConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write sim config " + path);
  out << to_text(cfg);
}

/// Fingerprint stored in demonstration headers.
inline std::string config_hash(const SimConfig& cfg) {
  return detail::hex64(detail::fnv1a64(to_text(cfg)));
}

}  // namespace pfs
