#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "pfs/demos/demonstration.hpp"
#include "pfs/sim/config.hpp"
#include "pfs/sim/sim.hpp"
#include "pfs/teleop/protocol.hpp"

namespace pfs::teleop {

struct SessionConfig {
  SimConfig sim;
  double liveness_timeout = 0.5;  ///< [s] of silence before the held wrench decays
  double decay_time_constant = 0.1;  ///< [s]
  double state_rate = 30.0;  ///< broadcast rate [Hz]
  std::uint64_t initial_seed = 0;
  std::filesystem::path dataset_dir = "teleop_demos";
  std::string id_prefix = "human";

  void validate() const {
    sim.validate();
    if (!(liveness_timeout > 0.0) || !(decay_time_constant > 0.0))
      throw ConfigError("liveness timeout and decay time constant must be positive");
    if (!(state_rate > 0.0) || state_rate * sim.dt > 1.0)
      throw ConfigError("state rate must be positive and at most the sim rate");
  }
};

/// Start state for a reset with `seed`.
inline SimState reset_state(const SimConfig& sim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_start(sim, rng);
}

/// One client's simulation. Not thread-safe: the owner serializes calls to
/// `handle` and `tick`; session time advances only through `tick`.
class Session {
public:
  Session(std::string id, SessionConfig cfg) : id_(std::move(id)), cfg_(std::move(cfg)) {
    cfg_.validate();
    hash_ = config_hash(cfg_.sim);
    state_ = reset_state(cfg_.sim, cfg_.initial_seed);
  }

  std::string hello() const {
    return hello_frame(id_, cfg_.sim.wrench_limits, cfg_.sim.dt, cfg_.state_rate, hash_);
  }

  /// Processes one client frame and returns the replies. Never throws for
  /// bad input; rejected frames produce an error frame.
  std::vector<std::string> handle(std::string_view text) {
    ClientMessage msg;
    try {
      msg = parse_client_message(text);
    } catch (const ProtocolError& e) {
      return {error_frame(e.code(), e.what())};
    }
    last_heard_ = steps_;
    try {
      return std::visit([this](auto& m) { return on(m); }, msg);
    } catch (const Error& e) {
      return {error_frame("internal", e.what())};
    }
  }

  /// Advances the simulation by one sample period. Returns a state frame
  /// when a broadcast is due.
  std::optional<std::string> tick() {
    const double silent = static_cast<double>(steps_ - last_heard_) * cfg_.sim.dt;
    if (silent > cfg_.liveness_timeout) decay();
    if (recording_)
      buffer_.samples.push_back({static_cast<double>(buffer_.samples.size()) * cfg_.sim.dt, state_.pose,
                                 state_.twist, applied_});
    try {
      state_ = step(state_, applied_, cfg_.sim);
    } catch (const NumericError&) {
      // a diverged part is put back at rest so the session stays usable
      recording_ = false;
      buffer_.samples.clear();
      applied_ = {};
      state_ = make_state(state_.pose, cfg_.sim, state_.t);
      if (!is_finite(state_.pose)) state_ = reset_state(cfg_.sim, cfg_.initial_seed);
    }
    ++steps_;
    const auto due = [this](std::uint64_t k) {
      return static_cast<std::uint64_t>(std::floor(static_cast<double>(k) * cfg_.state_rate * cfg_.sim.dt + 1e-9));
    };
    if (due(steps_) != due(steps_ - 1)) return state_frame(state_, recording_);
    return std::nullopt;
  }

  const std::string& id() const { return id_; }
  const SimState& state() const { return state_; }
  const Wrench& applied() const { return applied_; }
  bool recording() const { return recording_; }
  std::uint64_t steps() const { return steps_; }
  const std::vector<std::filesystem::path>& saved() const { return saved_; }

  /// Drops an unfinished recording, e.g. when the client disconnects.
  bool abandon_recording() {
    const bool was = recording_;
    recording_ = false;
    buffer_.samples.clear();
    return was;
  }

private:
  std::vector<std::string> on(const WrenchMsg& m) {
    applied_ = scale_input(m.axes, cfg_.sim.wrench_limits);
    return {};
  }

  std::vector<std::string> on(const StartRecording&) {
    if (recording_) return {error_frame("already_recording", "a recording is already active")};
    recording_ = true;
    buffer_ = Demonstration{};
    buffer_.sim_config_hash = hash_;
    buffer_.dt = cfg_.sim.dt;
    buffer_.source = DemoSource::human;
    return {ack_frame("start_recording", {{"t", state_.t}})};
  }

  std::vector<std::string> on(const StopRecording& m) {
    if (!recording_) return {error_frame("not_recording", "no recording is active")};
    if (buffer_.samples.empty()) return {error_frame("empty_recording", "no samples recorded yet")};
    recording_ = false;
    buffer_.success = m.success;
    buffer_.id = next_id();
    std::filesystem::path path;
    try {
      path = append_to_dataset(buffer_, cfg_.dataset_dir);
    } catch (const FormatError& e) {
      buffer_.samples.clear();
      return {error_frame("io", e.what())};
    }
    saved_.push_back(path);
    nlohmann::ordered_json extra{{"t", state_.t},
                                 {"demo_id", buffer_.id},
                                 {"file", path.string()},
                                 {"samples", buffer_.samples.size()},
                                 {"duration", buffer_.duration()},
                                 {"success", m.success}};
    buffer_.samples.clear();
    return {ack_frame("stop_recording", extra)};
  }

  std::vector<std::string> on(const Reset& m) {
    if (recording_) return {error_frame("recording_active", "stop the recording before resetting")};
    const std::uint64_t seed = m.seed.value_or(++unseeded_resets_ + cfg_.initial_seed);
    state_ = reset_state(cfg_.sim, seed);
    applied_ = {};
    return {ack_frame("reset", {{"seed", seed}, {"state", state_json(state_, false)}})};
  }

  void decay() {
    const double f = std::exp(-cfg_.sim.dt / cfg_.decay_time_constant);
    applied_.fx *= f;
    applied_.fz *= f;
    applied_.tau *= f;
    const Wrench& l = cfg_.sim.wrench_limits;
    if (std::abs(applied_.fx) < 1e-9 * l.fx && std::abs(applied_.fz) < 1e-9 * l.fz &&
        std::abs(applied_.tau) < 1e-9 * l.tau)
      applied_ = {};
  }

  std::string next_id() {
    for (;;) {
      std::string n = std::to_string(++recordings_);
      n.insert(0, n.size() < 4 ? 4 - n.size() : 0, '0');
      const std::string candidate = cfg_.id_prefix + "_" + id_ + "_" + n;
      if (!std::filesystem::exists(cfg_.dataset_dir / (candidate + ".demo.jsonl"))) return candidate;
    }
  }

  std::string id_;
  SessionConfig cfg_;
  std::string hash_;
  SimState state_;
  Wrench applied_;
  bool recording_ = false;
  Demonstration buffer_;
  std::uint64_t steps_ = 0;
  std::uint64_t last_heard_ = 0;
  std::uint64_t unseeded_resets_ = 0;
  int recordings_ = 0;
  std::vector<std::filesystem::path> saved_;
};

}  // namespace pfs::teleop
