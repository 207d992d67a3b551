#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "pfs/sim/config.hpp"
#include "pfs/sim/types.hpp"

namespace pfs {

struct Vec2 {
  double x = 0.0;
  double z = 0.0;
};

/// Penetration of a point into the environment solid.
struct Penetration {
  double depth = 0.0;  ///< > 0 when penetrating
  Vec2 normal;         ///< unit direction that pushes the point out
};

namespace detail {

inline double surface_height(const SimConfig& c, double ax) {
  if (ax < c.hole_half_width) return 0.0;
  return std::min(c.hole_depth, c.hole_depth - c.chamfer + (ax - c.hole_half_width));
}

inline Vec2 closest_on_segment(Vec2 p, Vec2 a, Vec2 b) {
  const double ex = b.x - a.x, ez = b.z - a.z;
  const double len2 = ex * ex + ez * ez;
  double s = len2 > 0.0 ? ((p.x - a.x) * ex + (p.z - a.z) * ez) / len2 : 0.0;
  s = std::clamp(s, 0.0, 1.0);
  return {a.x + s * ex, a.z + s * ez};
}

// Penetration for a point with x >= 0, in hole-centered coordinates.
inline Penetration penetration_right_half(const SimConfig& c, Vec2 p) {
  if (p.z >= surface_height(c, p.x)) return {};
  const double hw = c.hole_half_width, d = c.hole_depth, ch = c.chamfer;
  const double far = hw + ch + 1.0;
  const std::array<std::array<Vec2, 2>, 4> segs{{
      {Vec2{0.0, 0.0}, Vec2{hw, 0.0}},
      {Vec2{hw, 0.0}, Vec2{hw, d - ch}},
      {Vec2{hw, d - ch}, Vec2{hw + ch, d}},
      {Vec2{hw + ch, d}, Vec2{far, d}},
  }};
  double best = INFINITY;
  Vec2 best_pt{};
  for (const auto& s : segs) {
    Vec2 q = closest_on_segment(p, s[0], s[1]);
    double dx = q.x - p.x, dz = q.z - p.z;
    double dist = std::sqrt(dx * dx + dz * dz);
    if (dist < best) {
      best = dist;
      best_pt = q;
    }
  }
  if (!(best > 0.0)) return {};
  return {best, {(best_pt.x - p.x) / best, (best_pt.z - p.z) / best}};
}

}  // namespace detail

/// Depth and push-out direction of a world point inside the environment
/// solid. Computed on the right half and mirrored so that the result is
/// exactly antisymmetric in x.
inline Penetration point_penetration(const SimConfig& c, Vec2 p) {
  Vec2 h{p.x - c.goal_offset_x, p.z - c.goal_offset_z};
  if (h.x >= 0.0) return detail::penetration_right_half(c, h);
  Penetration r = detail::penetration_right_half(c, {-h.x, h.z});
  r.normal.x = -r.normal.x;
  return r;
}

/// Corner `i` of the part rectangle: 0 bottom-left, 1 bottom-right,
/// 2 top-left, 3 top-right (in part coordinates).
inline Vec2 part_corner_local(const SimConfig& c, int i) {
  const double sx = (i % 2 == 0) ? -c.part_half_width : c.part_half_width;
  const double sz = (i < 2) ? 0.0 : c.part_height;
  return {sx, sz};
}

inline Vec2 to_world(const Pose& pose, Vec2 local) {
  const double s = std::sin(pose.theta), co = std::cos(pose.theta);
  return {pose.x + (co * local.x - s * local.z), pose.z + (s * local.x + co * local.z)};
}

/// Convex corners of the environment that can dig into the part sides,
/// ordered as mirror pairs (left, right).
inline std::array<Vec2, 4> environment_vertices(const SimConfig& c) {
  const double hw = c.hole_half_width, d = c.hole_depth, ch = c.chamfer;
  const double ox = c.goal_offset_x, oz = c.goal_offset_z;
  return {{{ox - hw, oz + d - ch}, {ox + hw, oz + d - ch}, {ox - hw - ch, oz + d}, {ox + hw + ch, oz + d}}};
}

namespace detail {

/// Force on the part from one penetrating contact point at world location
/// `at`, accumulated as a wrench about the part origin.
inline Wrench contact_force(const SimConfig& c, const Pose& pose, const Twist& tw, Vec2 at,
                            const Penetration& pen) {
  const double rx = at.x - pose.x, rz = at.z - pose.z;
  const double vpx = tw.vx - tw.omega * rz;
  const double vpz = tw.vz + tw.omega * rx;
  const double nx = pen.normal.x, nz = pen.normal.z;
  const double vn = vpx * nx + vpz * nz;  // > 0 separating
  const double fn = std::max(0.0, c.contact_stiffness * pen.depth - c.contact_damping * vn);
  const double tx = nz, tz = -nx;
  const double vt = vpx * tx + vpz * tz;
  double ft = 0.0;
  if (std::abs(vt) < c.stiction_vel_eps)
    ft = -c.stiction_mu * fn * (vt / c.stiction_vel_eps);
  else
    ft = vt > 0.0 ? -c.friction_mu * fn : c.friction_mu * fn;
  const double fx = fn * nx + ft * tx;
  const double fz = fn * nz + ft * tz;
  return {fx, fz, rx * fz - rz * fx};
}

}  // namespace detail

/// Penalty contact: sum of the normal and friction forces of every part
/// corner inside the environment and every environment corner inside the
/// part. Zero when nothing penetrates.
inline Wrench contact_resolve(const Pose& pose, const Twist& twist, const SimConfig& c,
                              bool* any_contact = nullptr) {
  bool touched = false;
  auto corner = [&](int i) -> Wrench {
    Vec2 w = to_world(pose, part_corner_local(c, i));
    Penetration pen = point_penetration(c, w);
    if (pen.depth <= 0.0) return {};
    touched = true;
    return detail::contact_force(c, pose, twist, w, pen);
  };
  auto env_vertex = [&](Vec2 v) -> Wrench {
    const double s = std::sin(pose.theta), co = std::cos(pose.theta);
    const double dx = v.x - pose.x, dz = v.z - pose.z;
    const double lx = co * dx + s * dz;
    const double lz = -s * dx + co * dz;
    const double hw = c.part_half_width;
    if (!(lx > -hw && lx < hw && lz > 0.0 && lz < c.part_height)) return {};
    // Push out through the nearest side; the force on the part points from
    // that side inward (away from the vertex).
    const std::array<double, 4> depth{hw + lx, hw - lx, lz, c.part_height - lz};
    const std::array<Vec2, 4> inward{{{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}}};
    int k = 0;
    for (int j = 1; j < 4; ++j)
      if (depth[static_cast<std::size_t>(j)] < depth[static_cast<std::size_t>(k)]) k = j;
    const Vec2 n_local = inward[static_cast<std::size_t>(k)];
    Penetration pen{depth[static_cast<std::size_t>(k)],
                    {co * n_local.x - s * n_local.z, s * n_local.x + co * n_local.z}};
    touched = true;
    return detail::contact_force(c, pose, twist, v, pen);
  };
  const auto verts = environment_vertices(c);
  // Mirror pairs are summed first so the total is exactly antisymmetric
  // under x -> -x.
  Wrench total = corner(0) + corner(1);
  total = total + (corner(2) + corner(3));
  total = total + (env_vertex(verts[0]) + env_vertex(verts[1]));
  if (c.chamfer > 0.0) total = total + (env_vertex(verts[2]) + env_vertex(verts[3]));
  if (any_contact) *any_contact = touched;
  return total;
}

}  // namespace pfs
