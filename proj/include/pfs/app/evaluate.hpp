#pragma once

#include <algorithm>
#include <cmath>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "pfs/app/demonstrator.hpp"
#include "pfs/control/deploy.hpp"
#include "pfs/sim/sim.hpp"

namespace pfs {

struct EvalConfig {
  int trials = 30;
  std::uint64_t seed = 1;
  double max_time = 30.0;
  double success_threshold = 1e-3;
  double post_scale = 1.0;
  int workers = 1;
  double trace_rate = 10.0;  ///< goal-distance samples per sim second; 0 = no traces
};

struct TrialResult {
  int index = 0;
  Pose start;
  control::Outcome outcome = control::Outcome::timeout;
  double duration = 0.0;
  double final_distance = 0.0;
  std::string fault;
  std::vector<double> trace;  ///< goal distance every 1/trace_rate s, then the final value

  friend bool operator==(const TrialResult& a, const TrialResult& b) {
    return a.index == b.index && a.start == b.start && a.outcome == b.outcome && a.duration == b.duration &&
           a.final_distance == b.final_distance && a.fault == b.fault && a.trace == b.trace;
  }
};

struct EvalReport {
  std::string policy;
  int trials = 0;
  int successes = 0;
  double success_rate = 0.0;
  double mean_success_time = 0.0;  ///< over successful trials, 0 when none
  std::vector<TrialResult> results;
  /// Successful trials whose completion time lies outside the box-plot
  /// whiskers (1.5 IQR beyond the quartiles).
  std::vector<int> outliers;
  double trace_rate = 0.0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// The scripted operator driving the controller instead of the sim. Its
/// style is drawn from the trial stream at the first tick after a reset.
class ScriptedPolicy : public control::Policy {
public:
  explicit ScriptedPolicy(const SimConfig& sim, DemonstratorConfig cfg = {}) : sim_(sim), cfg_(cfg) {}
  void reset() override {
    op_.reset();
    t_ = 0.0;
  }
  Wrench act(const Pose& pose, const Twist& twist, const Wrench&, std::mt19937_64& rng) override {
    if (!op_) op_ = std::make_unique<ScriptedOperator>(sim_, cfg_, rng);
    SimState s;
    s.pose = pose;
    s.twist = twist;
    s.t = t_;
    s.contact_wrench = contact_resolve(pose, twist, sim_, &s.in_contact);
    t_ += sim_.dt;
    return op_->act(s);
  }

private:
  SimConfig sim_;
  DemonstratorConfig cfg_;
  std::unique_ptr<ScriptedOperator> op_;
  double t_ = 0.0;
};

using PolicyFactory = std::function<std::unique_ptr<control::Policy>()>;

/// Start pose and sampling stream of trial i depend only on (seed, i), so
/// every policy faces the same starts.
inline TrialResult run_trial(control::Policy& policy, const SimConfig& sim, const control::ControllerConfig& ctrl,
                             const EvalConfig& ec, int i) {
  std::mt19937_64 rng = stream_rng(ec.seed, static_cast<std::uint64_t>(i));
  const Pose start = random_start(sim, rng).pose;
  control::DeployConfig dc;
  dc.max_time = ec.max_time;
  dc.success_threshold = ec.success_threshold;
  dc.post_scale = ec.post_scale;
  dc.log_every = ec.trace_rate > 0.0
                     ? std::max(1, static_cast<int>(std::lround(ctrl.control_rate / ec.trace_rate)))
                     : -1;
  const control::EpisodeLog log = control::deploy(policy, sim, ctrl, start, dc, rng);
  TrialResult r{i, start, log.outcome, log.duration, log.final_distance, log.fault, {}};
  r.trace.reserve(log.rows.size());
  for (const auto& row : log.rows) r.trace.push_back(row.goal_distance);
  return r;
}

/// Linear-interpolation quantile of sorted data.
inline double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline std::vector<int> completion_time_outliers(const std::vector<TrialResult>& results) {
  std::vector<double> times;
  for (const auto& r : results)
    if (r.outcome == control::Outcome::success) times.push_back(r.duration);
  std::vector<int> out;
  if (times.size() < 4) return out;
  std::sort(times.begin(), times.end());
  const double q1 = quantile(times, 0.25), q3 = quantile(times, 0.75), iqr = q3 - q1;
  for (const auto& r : results)
    if (r.outcome == control::Outcome::success && (r.duration < q1 - 1.5 * iqr || r.duration > q3 + 1.5 * iqr))
      out.push_back(r.index);
  return out;
}

/// Seeded closed-loop trials. Workers each own a policy instance and
/// results are stored by trial index, so the report does not depend on the
/// worker count.
inline EvalReport evaluate(const PolicyFactory& make_policy, const std::string& name, const SimConfig& sim,
                           const control::ControllerConfig& ctrl, const EvalConfig& ec) {
  if (ec.trials < 1) throw ConfigError("evaluate: trials must be >= 1");
  if (ec.workers < 1) throw ConfigError("evaluate: workers must be >= 1");
  sim.validate();
  ctrl.validate();
  EvalReport rep;
  rep.policy = name;
  rep.trials = ec.trials;
  rep.trace_rate = ec.trace_rate;
  rep.results.resize(static_cast<std::size_t>(ec.trials));
  const int w = std::min(ec.workers, ec.trials);
  if (w == 1) {
    auto policy = make_policy();
    for (int i = 0; i < ec.trials; ++i) rep.results[static_cast<std::size_t>(i)] = run_trial(*policy, sim, ctrl, ec, i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::unique_ptr<control::Policy>> policies;
    for (int i = 0; i < w; ++i) policies.push_back(make_policy());
    std::vector<std::jthread> pool;
    for (int wi = 0; wi < w; ++wi)
      pool.emplace_back([&, wi] {
        for (int i = next++; i < ec.trials; i = next++)
          rep.results[static_cast<std::size_t>(i)] = run_trial(*policies[static_cast<std::size_t>(wi)], sim, ctrl, ec, i);
      });
  }
  double time_sum = 0.0;
  for (const auto& r : rep.results) {
    if (r.outcome == control::Outcome::success) {
      ++rep.successes;
      time_sum += r.duration;
    }
  }
  rep.success_rate = static_cast<double>(rep.successes) / rep.trials;
  rep.mean_success_time = rep.successes ? time_sum / rep.successes : 0.0;
  rep.outliers = completion_time_outliers(rep.results);
  return rep;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json trials = nlohmann::ordered_json::array();
  for (const auto& t : r.results)
    trials.push_back({{"index", t.index},
                      {"start", {t.start.x, t.start.z, t.start.theta}},
                      {"outcome", control::outcome_name(t.outcome)},
                      {"duration", t.duration},
                      {"final_distance", t.final_distance},
                      {"fault", t.fault},
                      {"goal_distance_trace", t.trace}});
  return {{"policy", r.policy},
          {"trials", r.trials},
          {"successes", r.successes},
          {"success_rate", r.success_rate},
          {"mean_success_time", r.mean_success_time},
          {"trace_rate", r.trace_rate},
          {"outliers", r.outliers},
          {"results", std::move(trials)}};
}

}  // namespace pfs
