#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pfs/control/arm.hpp"
#include "pfs/control/controller.hpp"
#include "pfs/demos/demonstration.hpp"
#include "pfs/demos/features.hpp"
#include "pfs/detail/text.hpp"
#include "pfs/net/model.hpp"
#include "pfs/sim/contact.hpp"
#include "pfs/sim/sim.hpp"
#include "pfs/train/checkpoint.hpp"

namespace pfs::control {

/// Source of wrench references, queried once per model tick with the
/// current tool state and the reference currently being applied.
class Policy {
public:
  virtual ~Policy() = default;
  virtual void reset() {}
  virtual Wrench act(const Pose& pose, const Twist& twist, const Wrench& current, std::mt19937_64& rng) = 0;
};

class ZeroPolicy : public Policy {
public:
  Wrench act(const Pose&, const Twist&, const Wrench&, std::mt19937_64&) override { return {}; }
};

/// Replays the recorded commands of a demonstration open loop, then zero.
class ReplayPolicy : public Policy {
public:
  explicit ReplayPolicy(Demonstration demo) : demo_(std::move(demo)) {}
  void reset() override { next_ = 0; }
  Wrench act(const Pose&, const Twist&, const Wrench&, std::mt19937_64&) override {
    if (next_ >= demo_.samples.size()) return {};
    return demo_.samples[next_++].wrench;
  }

private:
  Demonstration demo_;
  std::size_t next_ = 0;
};

/// Trained LSTM + mixture head. Inputs are normalized with the checkpoint
/// statistics and the sampled wrench is de-normalized.
class ModelPolicy : public Policy {
public:
  ModelPolicy(train::Checkpoint ck, Encoding encoding, double temperature)
      : ck_(std::move(ck)), encoding_(encoding), temperature_(temperature) {
    ck_.validate();
    train::require_dims(ck_, feature::count, feature::wrench_dim);
    if (!(temperature_ >= 0.0)) throw ConfigError("policy: temperature must be >= 0");
    reset();
  }

  void reset() override {
    state_ = net::LstmState::zeros(ck_.m());
    history_.clear();
  }

  Wrench act(const Pose& pose, const Twist& twist, const Wrench& current, std::mt19937_64& rng) override {
    const Eigen::VectorXd x = ck_.norm.apply(feature_vector(pose, twist, current));
    history_.push_back(x);
    net::LstmState enc;
    if (encoding_ == Encoding::incremental) {
      state_ = net::step(ck_.params.lstm, x, state_);
      enc = state_;
    } else {
      // Pad with the oldest input until a full window is available.
      const std::size_t len = static_cast<std::size_t>(ck_.N) + 1;
      std::vector<net::Matrix> seq;
      const std::size_t have = std::min(len, history_.size());
      for (std::size_t i = have; i < len; ++i) seq.push_back(history_[history_.size() - have]);
      for (std::size_t i = history_.size() - have; i < history_.size(); ++i) seq.push_back(history_[i]);
      enc = net::LstmState::zeros(ck_.m());
      for (const auto& s : seq) enc = net::step(ck_.params.lstm, s, enc);
      while (history_.size() > len) history_.pop_front();
    }
    const auto mix = net::head_forward(ck_.params.head, enc);
    const Eigen::VectorXd y = ck_.norm.invert_label(net::sample(mix, rng, temperature_));
    return Wrench::from_array({y[0], y[1], y[2]});
  }

  const net::LstmState& state() const { return state_; }
  const std::deque<Eigen::VectorXd>& history() const { return history_; }
  const train::Checkpoint& checkpoint() const { return ck_; }

private:
  train::Checkpoint ck_;
  Encoding encoding_;
  double temperature_;
  net::LstmState state_;
  std::deque<Eigen::VectorXd> history_;
};

struct DeployConfig {
  double max_time = 30.0;          ///< sim seconds before the episode counts as failed
  double success_threshold = 1e-3; ///< goal distance, m
  double post_scale = 1.0;
  int log_every = 0;               ///< control steps between log rows; 0 = once per model tick, < 0 = off
};

struct LogRow {
  double t = 0.0;
  Vec3 q = Vec3::Zero();
  Pose pose;
  Twist twist;
  Wrench f_ref;
  Wrench f_meas;
  double goal_distance = 0.0;
  double inertia_min_eig = 0.0;
};

enum class Outcome { success, timeout, fault };

inline const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::success: return "success";
    case Outcome::timeout: return "timeout";
    case Outcome::fault: return "fault";
  }
  return "unknown";
}

struct EpisodeLog {
  Pose start;
  Outcome outcome = Outcome::timeout;
  std::string fault;
  double duration = 0.0;       ///< sim time at the end of the episode
  double final_distance = 0.0;
  std::int64_t model_ticks = 0;
  std::int64_t control_steps = 0;
  std::int64_t regularized = 0;
  std::vector<LogRow> rows;

  bool success() const { return outcome == Outcome::success; }
};

/// Runs one episode: the part rides rigidly on the tool frame, the model
/// (or any policy) sets the wrench reference at model_rate and the
/// admittance controller tracks it at control_rate against the measured
/// environment reaction f_meas = -contact_wrench.
inline EpisodeLog deploy(Policy& policy, const SimConfig& sim, const ControllerConfig& ctrl, const Pose& start,
                         const DeployConfig& dc, std::mt19937_64& rng) {
  sim.validate();
  ctrl.validate();
  if (!(dc.max_time > 0)) throw ConfigError("deploy: max_time must be > 0");
  const int per_tick = ctrl.steps_per_tick();
  const int log_every = dc.log_every == 0 ? per_tick : dc.log_every;
  const double rate_scale = ctrl.sim_dt * ctrl.control_rate;
  const double step_time = 1.0 / ctrl.control_rate;
  const auto max_steps = static_cast<std::int64_t>(std::llround(dc.max_time * ctrl.control_rate));

  EpisodeLog log;
  log.start = start;
  ArmState arm;
  arm.q = inverse_kinematics(ctrl.arm, start);
  ControlStats stats;
  policy.reset();
  Wrench f_ref;
  auto [pose, twist] = forward_kinematics(ctrl.arm, arm, rate_scale);
  Wrench f_meas = -contact_resolve(pose, twist, sim);

  auto record = [&](double t) {
    LogRow r;
    r.t = t;
    r.q = arm.q;
    r.pose = pose;
    r.twist = twist;
    r.f_ref = f_ref;
    r.f_meas = f_meas;
    r.goal_distance = goal_distance(pose);
    r.inertia_min_eig = Eigen::SelfAdjointEigenSolver<Mat3>(inertia(ctrl.arm, arm.q), Eigen::EigenvaluesOnly)
                            .eigenvalues()
                            .minCoeff();
    log.rows.push_back(r);
  };

  std::int64_t k = 0;
  try {
    while (true) {
      const double t = static_cast<double>(k) * step_time;
      if (goal_distance(pose) <= dc.success_threshold) {
        log.outcome = Outcome::success;
        break;
      }
      if (k >= max_steps) {
        log.outcome = Outcome::timeout;
        break;
      }
      if (k % per_tick == 0) {
        f_ref = post_scale(clamp_wrench(policy.act(pose, twist, f_ref, rng), sim.wrench_limits), dc.post_scale);
        if (!is_finite(f_ref)) throw NumericError("policy produced a non-finite wrench");
        ++log.model_ticks;
      }
      if (log_every > 0 && k % log_every == 0) record(t);
      arm = control_step(ctrl, arm, f_ref, f_meas, &stats);
      ++k;
      std::tie(pose, twist) = forward_kinematics(ctrl.arm, arm, rate_scale);
      if (!is_finite(pose) || !is_finite(twist)) throw NumericError("arm state is not finite");
      f_meas = -contact_resolve(pose, twist, sim);
    }
  } catch (const Error& e) {
    log.outcome = Outcome::fault;
    log.fault = e.what();
  }
  log.control_steps = stats.steps;
  log.regularized = stats.regularized;
  log.duration = static_cast<double>(k) * step_time;
  log.final_distance = goal_distance(pose);
  if (log_every > 0 && std::isfinite(log.final_distance)) record(log.duration);
  return log;
}

inline std::string episode_csv(const EpisodeLog& log) {
  using pfs::detail::format_double;
  std::string out = "t,q1,q2,q3,x,z,theta,vx,vz,omega,fref_x,fref_z,fref_tau,fmeas_x,fmeas_z,fmeas_tau,goal_distance\n";
  for (const auto& r : log.rows) {
    const double v[] = {r.t,        r.q[0],     r.q[1],     r.q[2],       r.pose.x,    r.pose.z,
                        r.pose.theta, r.twist.vx, r.twist.vz, r.twist.omega, r.f_ref.fx,  r.f_ref.fz,
                        r.f_ref.tau,  r.f_meas.fx, r.f_meas.fz, r.f_meas.tau, r.goal_distance};
    for (std::size_t i = 0; i < std::size(v); ++i) out += (i ? "," : "") + format_double(v[i]);
    out += "\n";
  }
  return out;
}

inline void write_episode_csv(const EpisodeLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatError::Kind::io, "cannot write " + path.string());
  out << episode_csv(log);
}

}  // namespace pfs::control
