#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfs/error.hpp"
#include "pfs/sim/types.hpp"

namespace pfs {

struct DemoSample {
  double t = 0.0;
  Pose pose;
  Twist twist;
  Wrench wrench;  ///< command applied from this sample to the next

  friend bool operator==(const DemoSample&, const DemoSample&) = default;
};

enum class DemoSource { human, scripted };

inline const char* to_string(DemoSource s) { return s == DemoSource::human ? "human" : "scripted"; }

struct Demonstration {
  std::string id;
  std::string sim_config_hash;
  double dt = 0.01;
  std::vector<DemoSample> samples;
  bool success = false;
  DemoSource source = DemoSource::scripted;

  std::size_t size() const { return samples.size(); }
  double duration() const {
    return samples.empty() ? 0.0 : static_cast<double>(samples.size() - 1) * dt;
  }

  friend bool operator==(const Demonstration&, const Demonstration&) = default;
};

inline constexpr int kDemoFormatVersion = 1;

namespace detail {

using nlohmann::json;

inline nlohmann::ordered_json triple(double a, double b, double c) {
  return nlohmann::ordered_json::array({a, b, c});
}

inline void read_triple(const json& j, const char* key, double& a, double& b, double& c) {
  const json& arr = j.at(key);
  if (!arr.is_array() || arr.size() != 3)
    throw FormatError(FormatError::Kind::value, std::string("field '") + key + "' must hold 3 numbers");
  for (const auto& v : arr)
    if (!v.is_number())
      throw FormatError(FormatError::Kind::value, std::string("field '") + key + "' must hold numbers");
  a = arr[0].get<double>();
  b = arr[1].get<double>();
  c = arr[2].get<double>();
  if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c))
    throw FormatError(FormatError::Kind::value, std::string("field '") + key + "' is not finite");
}

}  // namespace detail

/// Writes one demonstration as line-oriented JSON: a header object followed
/// by one object per sample.
inline void write_demo(const Demonstration& d, std::ostream& out) {
  using json = nlohmann::ordered_json;
  json header{{"version", kDemoFormatVersion}, {"id", d.id},          {"dt", d.dt},
              {"sim_config_hash", d.sim_config_hash}, {"source", to_string(d.source)},
              {"success", d.success},                 {"samples", d.samples.size()}};
  out << header.dump() << '\n';
  for (const auto& s : d.samples) {
    json line{{"t", s.t},
              {"pose", detail::triple(s.pose.x, s.pose.z, s.pose.theta)},
              {"twist", detail::triple(s.twist.vx, s.twist.vz, s.twist.omega)},
              {"wrench", detail::triple(s.wrench.fx, s.wrench.fz, s.wrench.tau)}};
    out << line.dump() << '\n';
  }
}

inline void write_demo(const Demonstration& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatError::Kind::io, "cannot write " + path.string());
  write_demo(d, out);
  if (!out) throw FormatError(FormatError::Kind::io, "write failed for " + path.string());
}

inline Demonstration read_demo(std::istream& in) {
  using detail::json;
  using Kind = FormatError::Kind;
  std::string line;
  if (!std::getline(in, line)) throw FormatError(Kind::truncated, "empty demonstration file");
  Demonstration d;
  std::size_t expected = 0;
  try {
    json h = json::parse(line);
    if (!h.is_object()) throw FormatError(Kind::syntax, "header is not an object");
    if (!h.contains("version") || !h["version"].is_number_integer())
      throw FormatError(Kind::syntax, "header lacks an integer version");
    if (h["version"].get<long long>() != kDemoFormatVersion)
      throw FormatError(Kind::version, "unsupported demonstration version " + h["version"].dump());
    d.id = h.at("id").get<std::string>();
    d.dt = h.at("dt").get<double>();
    d.sim_config_hash = h.at("sim_config_hash").get<std::string>();
    const std::string src = h.at("source").get<std::string>();
    if (src == "human")
      d.source = DemoSource::human;
    else if (src == "scripted")
      d.source = DemoSource::scripted;
    else
      throw FormatError(Kind::value, "unknown source '" + src + "'");
    d.success = h.at("success").get<bool>();
    const long long n = h.at("samples").get<long long>();
    if (n < 0 || n > 100'000'000) throw FormatError(Kind::value, "bad sample count");
    expected = static_cast<std::size_t>(n);
  } catch (const json::exception& e) {
    throw FormatError(Kind::syntax, std::string("header: ") + e.what());
  }
  if (!(d.dt > 0.0) || !std::isfinite(d.dt)) throw FormatError(Kind::value, "dt must be positive");

  d.samples.reserve(std::min<std::size_t>(expected, 1'000'000));
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (d.samples.size() == expected)
      throw FormatError(Kind::value, "more samples than the header declares");
    DemoSample s;
    try {
      json j = json::parse(line);
      if (!j.is_object()) throw FormatError(Kind::syntax, "sample is not an object");
      if (!j.at("t").is_number()) throw FormatError(Kind::value, "t must be a number");
      s.t = j["t"].get<double>();
      detail::read_triple(j, "pose", s.pose.x, s.pose.z, s.pose.theta);
      detail::read_triple(j, "twist", s.twist.vx, s.twist.vz, s.twist.omega);
      detail::read_triple(j, "wrench", s.wrench.fx, s.wrench.fz, s.wrench.tau);
    } catch (const json::exception& e) {
      throw FormatError(Kind::syntax, "line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!std::isfinite(s.t)) throw FormatError(Kind::value, "line " + std::to_string(lineno) + ": t not finite");
    if (!d.samples.empty()) {
      const double gap = s.t - d.samples.back().t;
      if (!(std::abs(gap - d.dt) <= 1e-9 * std::max(1.0, std::abs(s.t))))
        throw FormatError(Kind::value, "line " + std::to_string(lineno) + ": samples not spaced by dt");
    }
    d.samples.push_back(s);
  }
  if (d.samples.size() != expected)
    throw FormatError(Kind::truncated, "expected " + std::to_string(expected) + " samples, found " +
                                           std::to_string(d.samples.size()));
  return d;
}

inline Demonstration read_demo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
  return read_demo(in);
}

/// A directory of demonstration files plus `manifest.json`.
struct Dataset {
  std::vector<Demonstration> demos;

  std::size_t size() const { return demos.size(); }
  bool empty() const { return demos.empty(); }
};

inline std::string demo_file_name(const Demonstration& d) { return d.id + ".demo.jsonl"; }

namespace detail {

inline nlohmann::json manifest_entry(const Demonstration& d) {
  return {{"file", demo_file_name(d)},
          {"id", d.id},
          {"samples", d.samples.size()},
          {"duration", d.duration()},
          {"success", d.success},
          {"source", to_string(d.source)}};
}

inline nlohmann::json read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) return {{"version", kDemoFormatVersion}, {"demos", nlohmann::json::array()}};
  try {
    nlohmann::json m = nlohmann::json::parse(in);
    if (!m.is_object() || !m.contains("demos") || !m["demos"].is_array())
      throw FormatError(FormatError::Kind::syntax, "manifest lacks a demos array");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::syntax, std::string("manifest: ") + e.what());
  }
}

inline void write_manifest(const std::filesystem::path& dir, const nlohmann::json& m) {
  std::ofstream out(dir / "manifest.json");
  if (!out) throw FormatError(FormatError::Kind::io, "cannot write manifest in " + dir.string());
  out << m.dump(1) << '\n';
}

}  // namespace detail

/// Writes every demonstration and a manifest listing them in order.
inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json m{{"version", kDemoFormatVersion}, {"demos", nlohmann::json::array()}};
  for (const auto& d : ds.demos) {
    write_demo(d, dir / demo_file_name(d));
    m["demos"].push_back(detail::manifest_entry(d));
  }
  detail::write_manifest(dir, m);
}

/// Adds one demonstration to an existing (or new) dataset directory.
inline std::filesystem::path append_to_dataset(const Demonstration& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json m = detail::read_manifest(dir);
  const auto path = dir / demo_file_name(d);
  write_demo(d, path);
  m["demos"].push_back(detail::manifest_entry(d));
  detail::write_manifest(dir, m);
  return path;
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw FormatError(FormatError::Kind::io, "dataset directory not found: " + dir.string());
  nlohmann::json m = detail::read_manifest(dir);
  Dataset ds;
  try {
    for (const auto& e : m["demos"]) ds.demos.push_back(read_demo(dir / e.at("file").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::syntax, std::string("manifest entry: ") + e.what());
  }
  return ds;
}

}  // namespace pfs
