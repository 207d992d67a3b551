#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include <json.hpp>

#include "pfs/error.hpp"
#include "pfs/sim/sim.hpp"
#include "pfs/sim/types.hpp"

namespace pfs::teleop {

inline constexpr int kProtocolVersion = 1;
inline constexpr double kDeadZone = 0.05;
inline constexpr std::size_t kMaxFrameBytes = 64 * 1024;

/// Normalized joystick axes (fx, fz, tau) to a wrench. Axes are clamped to
/// [-1, 1]; magnitudes below the dead zone map to exactly zero.
inline Wrench scale_input(const std::array<double, 3>& axes, const Wrench& limits) {
  auto one = [](double a, double lim) {
    if (!std::isfinite(a)) return 0.0;
    a = std::clamp(a, -1.0, 1.0);
    return std::abs(a) < kDeadZone ? 0.0 : a * lim;
  };
  return {one(axes[0], limits.fx), one(axes[1], limits.fz), one(axes[2], limits.tau)};
}

struct WrenchMsg {
  std::array<double, 3> axes{};
};
struct StartRecording {};
struct StopRecording {
  bool success = false;
};
struct Reset {
  std::optional<std::uint64_t> seed;
};

using ClientMessage = std::variant<WrenchMsg, StartRecording, StopRecording, Reset>;

/// A client frame that could not be accepted. `code()` goes on the wire.
class ProtocolError : public Error {
public:
  ProtocolError(std::string code, const std::string& what) : Error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

private:
  std::string code_;
};

inline ClientMessage parse_client_message(std::string_view text) {
  using nlohmann::json;
  if (text.size() > kMaxFrameBytes) throw ProtocolError("malformed", "frame too large");
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw ProtocolError("malformed", std::string("not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ProtocolError("malformed", "frame is not an object");
  auto it = j.find("type");
  if (it == j.end() || !it->is_string()) throw ProtocolError("malformed", "missing string field 'type'");
  const std::string type = it->get<std::string>();

  if (type == "wrench") {
    auto w = j.find("wrench");
    if (w == j.end() || !w->is_array() || w->size() != 3)
      throw ProtocolError("bad_field", "'wrench' must be an array of 3 numbers");
    WrenchMsg m;
    for (std::size_t i = 0; i < 3; ++i) {
      if (!(*w)[i].is_number()) throw ProtocolError("bad_field", "'wrench' must be an array of 3 numbers");
      m.axes[i] = (*w)[i].get<double>();
    }
    return m;
  }
  if (type == "start_recording") return StartRecording{};
  if (type == "stop_recording") {
    auto s = j.find("success");
    if (s == j.end() || !s->is_boolean()) throw ProtocolError("bad_field", "'success' must be a boolean");
    return StopRecording{s->get<bool>()};
  }
  if (type == "reset") {
    Reset r;
    auto s = j.find("seed");
    if (s != j.end() && !s->is_null()) {
      if (!s->is_number_unsigned()) throw ProtocolError("bad_field", "'seed' must be a non-negative integer");
      r.seed = s->get<std::uint64_t>();
    }
    return r;
  }
  throw ProtocolError("unknown_type", "unknown message type '" + type + "'");
}

inline const char* type_name(const ClientMessage& m) {
  static constexpr const char* names[] = {"wrench", "start_recording", "stop_recording", "reset"};
  return names[m.index()];
}

namespace detail {
using ojson = nlohmann::ordered_json;
inline ojson arr(double a, double b, double c) { return ojson::array({a, b, c}); }
}  // namespace detail

inline nlohmann::ordered_json state_json(const SimState& s, bool recording) {
  using detail::arr;
  return {{"type", "state"},
          {"t", s.t},
          {"pose", arr(s.pose.x, s.pose.z, s.pose.theta)},
          {"twist", arr(s.twist.vx, s.twist.vz, s.twist.omega)},
          {"contact_wrench", arr(s.contact_wrench.fx, s.contact_wrench.fz, s.contact_wrench.tau)},
          {"in_contact", s.in_contact},
          {"goal_distance", goal_distance(s)},
          {"recording", recording}};
}

inline std::string state_frame(const SimState& s, bool recording) { return state_json(s, recording).dump(); }

inline std::string hello_frame(const std::string& session, const Wrench& limits, double dt, double state_rate,
                               const std::string& sim_hash) {
  detail::ojson j{{"type", "hello"},
                  {"version", kProtocolVersion},
                  {"session", session},
                  {"wrench_limits", detail::arr(limits.fx, limits.fz, limits.tau)},
                  {"dead_zone", kDeadZone},
                  {"dt", dt},
                  {"state_rate", state_rate},
                  {"sim_config_hash", sim_hash}};
  return j.dump();
}

/// `extra` fields are appended after type and of.
inline std::string ack_frame(const std::string& of, const nlohmann::ordered_json& extra = {}) {
  detail::ojson j{{"type", "ack"}, {"of", of}};
  if (extra.is_object())
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  return j.dump();
}

inline std::string error_frame(const std::string& code, const std::string& message) {
  // invalid UTF-8 from the client must not make dump() throw
  detail::ojson j{{"type", "error"}, {"code", code}, {"message", message}};
  return j.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace);
}

}  // namespace pfs::teleop
