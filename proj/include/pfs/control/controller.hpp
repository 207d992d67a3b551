#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "pfs/control/arm.hpp"
#include "pfs/error.hpp"
#include "pfs/sim/config.hpp"
#include "pfs/sim/types.hpp"

namespace pfs::control {

/// How the model encoder is fed during deployment.
enum class Encoding {
  incremental,  ///< LSTM state threaded across every model tick
  window,       ///< re-encode the last N+1 inputs from zero state each tick
};

inline const char* encoding_name(Encoding e) { return e == Encoding::incremental ? "incremental" : "window"; }

inline Encoding parse_encoding(const std::string& s) {
  if (s == "incremental") return Encoding::incremental;
  if (s == "window") return Encoding::window;
  throw ConfigError("unknown encoding '" + s + "' (expected incremental or window)");
}

struct ControllerConfig {
  Wrench Kp{1.0, 1.0, 1.0};     ///< diagonal gain per wrench axis
  double sim_dt = 1e-4;         ///< controller integration step, s
  double model_rate = 100.0;    ///< Hz
  double control_rate = 10000.0;///< Hz
  double joint_damping_factor = 0.9;
  double qdd_limit = 1e6;       ///< rad/s^2 per joint
  double regularization = 1e-6; ///< added to the inertia diagonal when not positive definite
  Encoding encoding = Encoding::incremental;
  ArmConfig arm;

  /// Control steps per model tick; throws unless the rates divide exactly.
  int steps_per_tick() const {
    const double r = control_rate / model_rate;
    const long n = std::lround(r);
    if (n < 1 || std::abs(r - static_cast<double>(n)) > 1e-9 * r)
      throw ConfigError("controller: control_rate must be a positive multiple of model_rate");
    return static_cast<int>(n);
  }

  void validate() const {
    if (!(Kp.fx > 0 && Kp.fz > 0 && Kp.tau > 0)) throw ConfigError("controller: Kp entries must be > 0");
    if (!(sim_dt > 0)) throw ConfigError("controller: sim_dt must be > 0");
    if (!(model_rate > 0) || !(control_rate > 0)) throw ConfigError("controller: rates must be > 0");
    steps_per_tick();
    if (!(joint_damping_factor >= 0 && joint_damping_factor <= 1))
      throw ConfigError("controller: joint_damping_factor must be in [0, 1]");
    if (!(qdd_limit > 0)) throw ConfigError("controller: qdd_limit must be > 0");
    if (!(regularization > 0)) throw ConfigError("controller: regularization must be > 0");
    arm.validate();
  }
};

/// Payload mass and inertia for which the free-space terminal speed under
/// a constant wrench equals that of the simulated part under its damping:
/// with v <- d (v + a dt) the steady joint-space speed is d/(1-d) a dt,
/// and one control step of sim time moves the tool by v dt.
inline ControllerConfig matched_controller(const SimConfig& sim, ControllerConfig cfg = {}) {
  const double d = cfg.joint_damping_factor;
  const double gain = d / (1.0 - d) * cfg.sim_dt * cfg.sim_dt * cfg.control_rate;
  cfg.arm.payload_mass = gain * sim.lin_damping * cfg.Kp.fx;
  cfg.arm.payload_inertia = gain * sim.rot_damping * cfg.Kp.tau;
  return cfg;
}

struct ControlStats {
  std::int64_t steps = 0;
  std::int64_t regularized = 0;  ///< solves that needed H + lambda I
};

/// Joint accelerations for a wrench error: tau = J^T Kp (f_ref - f_meas),
/// qdd = H^-1 tau.
inline Vec3 joint_acceleration(const ControllerConfig& cfg, const Vec3& q, const Wrench& f_ref, const Wrench& f_meas,
                               ControlStats* stats = nullptr) {
  const Vec3 err(cfg.Kp.fx * (f_ref.fx - f_meas.fx), cfg.Kp.fz * (f_ref.fz - f_meas.fz),
                 cfg.Kp.tau * (f_ref.tau - f_meas.tau));
  const Vec3 tau = jacobian(cfg.arm, q).transpose() * err;
  const Mat3 H = inertia(cfg.arm, q);
  Eigen::LLT<Mat3> llt(H);
  Vec3 qdd;
  if (llt.info() == Eigen::Success) {
    qdd = llt.solve(tau);
  } else {
    if (stats) ++stats->regularized;
    qdd = (H + cfg.regularization * Mat3::Identity()).ldlt().solve(tau);
  }
  return qdd.cwiseMax(-cfg.qdd_limit).cwiseMin(cfg.qdd_limit);
}

/// One control cycle: forward Euler on the joint state followed by the
/// joint damping factor.
inline ArmState control_step(const ControllerConfig& cfg, const ArmState& arm, const Wrench& f_ref,
                             const Wrench& f_meas, ControlStats* stats = nullptr) {
  if (!is_finite(f_ref) || !is_finite(f_meas) || !arm.q.allFinite() || !arm.qd.allFinite())
    throw NumericError("control_step: non-finite input");
  const Vec3 qdd = joint_acceleration(cfg, arm.q, f_ref, f_meas, stats);
  ArmState out;
  out.q = arm.q + arm.qd * cfg.sim_dt;
  out.qd = (arm.qd + qdd * cfg.sim_dt) * cfg.joint_damping_factor;
  if (stats) ++stats->steps;
  return out;
}

/// Element-wise scaling of a wrench reference by a factor in [0, 1].
inline Wrench post_scale(const Wrench& w, double factor) {
  if (!(factor >= 0.0 && factor <= 1.0)) throw ConfigError("post_scale: factor must be in [0, 1]");
  return {w.fx * factor, w.fz * factor, w.tau * factor};
}

}  // namespace pfs::control
