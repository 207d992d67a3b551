#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "pfs/demos/demonstration.hpp"
#include "pfs/error.hpp"

namespace pfs {

/// Layout of the concatenated model input: goal-relative pose with the
/// orientation as (sin, cos), twist, and the commanded wrench.
namespace feature {
inline constexpr int x = 0, z = 1, sin_theta = 2, cos_theta = 3;
inline constexpr int vx = 4, vz = 5, omega = 6;
inline constexpr int fx = 7, fz = 8, tau = 9;
inline constexpr int count = 10;
inline constexpr int wrench_offset = fx;
inline constexpr int wrench_dim = 3;
}  // namespace feature

inline Eigen::VectorXd feature_vector(const Pose& p, const Twist& v, const Wrench& w) {
  Eigen::VectorXd f(feature::count);
  f << p.x, p.z, std::sin(p.theta), std::cos(p.theta), v.vx, v.vz, v.omega, w.fx, w.fz, w.tau;
  return f;
}

inline Eigen::VectorXd feature_vector(const DemoSample& s) {
  return feature_vector(s.pose, s.twist, s.wrench);
}

inline Eigen::VectorXd wrench_vector(const Wrench& w) { return Eigen::Vector3d(w.fx, w.fz, w.tau); }

/// One supervised sample: N+1 consecutive inputs and the next command.
struct TrainingWindow {
  std::vector<Eigen::VectorXd> inputs;
  Wrench label;
};

/// Windows at pivots t = N, N+stride, ..., len-2. Demonstrations shorter
/// than N+2 samples yield none.
inline std::vector<TrainingWindow> make_windows(const Demonstration& demo, int N, int stride = 1) {
  if (N < 0 || stride < 1) throw ConfigError("make_windows: need N >= 0 and stride >= 1");
  std::vector<TrainingWindow> out;
  const auto len = static_cast<long>(demo.samples.size());
  for (long t = N; t <= len - 2; t += stride) {
    TrainingWindow w;
    w.inputs.reserve(static_cast<std::size_t>(N + 1));
    for (long k = t - N; k <= t; ++k) w.inputs.push_back(feature_vector(demo.samples[static_cast<std::size_t>(k)]));
    w.label = demo.samples[static_cast<std::size_t>(t + 1)].wrench;
    out.push_back(std::move(w));
  }
  return out;
}

inline std::size_t window_count(std::size_t len, int N) {
  return len >= static_cast<std::size_t>(N) + 2 ? len - static_cast<std::size_t>(N) - 1 : 0;
}

/// Per-feature z-score statistics. Labels are normalized with the
/// statistics of the wrench features.
struct NormStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;

  int dim() const { return static_cast<int>(mean.size()); }

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    check(v.size());
    return ((v - mean).array() / stddev.array()).matrix();
  }
  Eigen::VectorXd invert(const Eigen::VectorXd& v) const {
    check(v.size());
    return (v.array() * stddev.array() + mean.array()).matrix();
  }
  Eigen::VectorXd apply_label(const Eigen::VectorXd& y) const {
    check_label(y.size());
    return ((y - mean.segment(feature::wrench_offset, y.size())).array() /
            stddev.segment(feature::wrench_offset, y.size()).array())
        .matrix();
  }
  Eigen::VectorXd invert_label(const Eigen::VectorXd& y) const {
    check_label(y.size());
    return (y.array() * stddev.segment(feature::wrench_offset, y.size()).array() +
            mean.segment(feature::wrench_offset, y.size()).array())
        .matrix();
  }

  static NormStats identity(int dim) {
    return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
  }

private:
  void check(Eigen::Index n) const {
    if (n != mean.size()) throw DimensionError("NormStats: vector size mismatch");
  }
  void check_label(Eigen::Index n) const {
    if (feature::wrench_offset + n > mean.size()) throw DimensionError("NormStats: label size mismatch");
  }
};

/// Mean and population standard deviation of every feature over every
/// sample in the dataset. Zero-variance features get std = 1.
inline NormStats fit_norm_stats(const Dataset& ds) {
  std::size_t n = 0;
  for (const auto& d : ds.demos) n += d.samples.size();
  if (n == 0) throw ConfigError("fit_norm_stats: dataset has no samples");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(feature::count);
  for (const auto& d : ds.demos)
    for (const auto& s : d.samples) mean += feature_vector(s);
  mean /= static_cast<double>(n);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(feature::count);
  for (const auto& d : ds.demos)
    for (const auto& s : d.samples) var += (feature_vector(s) - mean).array().square().matrix();
  var /= static_cast<double>(n);
  Eigen::VectorXd sd = var.array().sqrt().matrix();
  for (Eigen::Index i = 0; i < sd.size(); ++i)
    if (!(sd[i] > 1e-12)) sd[i] = 1.0;
  return {mean, sd};
}

}  // namespace pfs
