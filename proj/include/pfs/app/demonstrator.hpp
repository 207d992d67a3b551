#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include "pfs/demos/demonstration.hpp"
#include "pfs/error.hpp"
#include "pfs/sim/sim.hpp"

namespace pfs {

/// Seeded generator for item `index` of a seeded batch; independent of the
/// order in which items are produced.
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x5eedu};
  return std::mt19937_64(seq);
}

struct DemonstratorConfig {
  double max_time = 60.0;  ///< attempts longer than this are discarded [s]
  bool white_noise = false;  ///< ablation: uncorrelated instead of OU noise
  double noise_scale = 1.0;
};

/// Stochastic funnel policy standing in for a human operator. Each episode
/// draws an operator "style" (gains, press force, patience, noise level) so
/// that demonstration durations vary.
class ScriptedOperator {
public:
  ScriptedOperator(const SimConfig& sim, const DemonstratorConfig& cfg, std::mt19937_64& rng)
      : sim_(sim), cfg_(cfg), rng_(rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    gain_ = 0.35 + 1.0 * u(rng_);
    press_ = 4.0 + 8.0 * u(rng_);
    align_tol_ = 0.0006 + 0.0015 * u(rng_);
    hover_ = 0.002 + 0.004 * u(rng_);
    patience_ = 0.2 + 0.6 * u(rng_);
    smooth_ = 0.06 + 0.12 * u(rng_);
    noise_ = cfg.noise_scale * (0.3 + 0.9 * u(rng_));
  }

  /// Next command given the current state.
  Wrench act(const SimState& s) {
    const double dt = sim_.dt;
    const Pose& p = s.pose;
    const Twist& v = s.twist;
    const Wrench lim = sim_.wrench_limits;

    Wrench target;
    target.tau = gain_ * (-0.6 * p.theta - 0.01 * v.omega);
    target.fx = gain_ * (-900.0 * p.x - 10.0 * v.vx);
    const double rim = sim_.hole_depth + sim_.goal_offset_z;
    const bool above = p.z > rim + 0.5 * hover_;
    const bool aligned = std::abs(p.x) < align_tol_ && std::abs(p.theta) < 0.06;
    if (above) {
      if (aligned)
        target.fz = -press_;
      else
        target.fz = gain_ * (-900.0 * (p.z - (rim + hover_))) - 20.0 * v.vz;
    } else {
      target.fz = -press_;
      target.fx *= 0.5;
    }

    // Stuck inside the hole or on the chamfer: wiggle sideways and rock.
    const bool slow = std::abs(v.vz) < 0.002 && p.z > 0.6 * sim_.success_threshold && !above;
    stuck_time_ = slow ? stuck_time_ + dt : 0.0;
    if (stuck_time_ > patience_ && jiggle_left_ <= 0.0) {
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      jiggle_ = {3.0 * u(rng_), 0.5 * press_, 0.06 * u(rng_)};
      jiggle_left_ = 0.15 + 0.25 * std::abs(u(rng_));
    }
    if (jiggle_left_ > 0.0) {
      target = target + jiggle_;
      jiggle_left_ -= dt;
    }

    // First-order smoothing of the operator's hand plus correlated tremor.
    const double a = dt / smooth_;
    hand_ = hand_ + a * (target + -1.0 * hand_);
    std::normal_distribution<double> n(0.0, 1.0);
    const Wrench sd{1.0 * noise_, 1.0 * noise_, 0.02 * noise_};
    if (cfg_.white_noise) {
      tremor_ = {sd.fx * n(rng_), sd.fz * n(rng_), sd.tau * n(rng_)};
    } else {
      const double theta = dt / 0.25;
      const double k = std::sqrt(2.0 * theta);
      tremor_ = tremor_ + -theta * tremor_;
      tremor_ = tremor_ + Wrench{k * sd.fx * n(rng_), k * sd.fz * n(rng_), k * sd.tau * n(rng_)};
    }
    return clamp_wrench(hand_ + tremor_, lim);
  }

private:
  SimConfig sim_;
  DemonstratorConfig cfg_;
  std::mt19937_64& rng_;
  double gain_, press_, align_tol_, hover_, patience_, smooth_, noise_;
  double stuck_time_ = 0.0, jiggle_left_ = 0.0;
  Wrench jiggle_, hand_, tremor_;
};

/// Runs one scripted episode from a random start. Returns the recording if
/// the part reached the goal within the time budget.
inline std::optional<Demonstration> scripted_episode(const SimConfig& sim, const DemonstratorConfig& cfg,
                                                     std::mt19937_64& rng, const std::string& id) {
  SimState s = random_start(sim, rng);
  ScriptedOperator op(sim, cfg, rng);
  Demonstration d;
  d.id = id;
  d.dt = sim.dt;
  d.sim_config_hash = config_hash(sim);
  d.source = DemoSource::scripted;
  const auto max_steps = static_cast<long>(std::ceil(cfg.max_time / sim.dt));
  for (long i = 0; i <= max_steps; ++i) {
    const Wrench w = op.act(s);
    d.samples.push_back({s.t, s.pose, s.twist, w});
    if (goal_distance(s) <= sim.success_threshold) {
      d.success = true;
      return d;
    }
    s = step(s, w, sim);
  }
  return std::nullopt;
}

struct GenerationStats {
  std::size_t attempts = 0;
  std::size_t successes = 0;
};

/// Generates `count` successful scripted demonstrations. Attempt `i` uses
/// its own seeded stream, so the result depends only on `seed`.
inline Dataset generate_demos(const SimConfig& sim, std::size_t count, std::uint64_t seed,
                              const DemonstratorConfig& cfg = {}, GenerationStats* stats = nullptr) {
  sim.validate();
  Dataset ds;
  GenerationStats st;
  const std::size_t max_attempts = 2 * count + 10;
  while (ds.size() < count) {
    if (st.attempts >= max_attempts)
      throw ConfigError("scripted demonstrator succeeded in only " + std::to_string(st.successes) + " of " +
                        std::to_string(st.attempts) + " attempts (< 50%)");
    auto rng = stream_rng(seed, st.attempts);
    char id[32];
    std::snprintf(id, sizeof(id), "demo_%05zu", ds.size());
    auto demo = scripted_episode(sim, cfg, rng, id);
    ++st.attempts;
    if (demo) {
      ++st.successes;
      ds.demos.push_back(std::move(*demo));
    }
  }
  if (stats) *stats = st;
  return ds;
}

}  // namespace pfs
