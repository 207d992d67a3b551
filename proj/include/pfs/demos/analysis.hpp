#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pfs/demos/demonstration.hpp"
#include "pfs/error.hpp"
#include "pfs/sim/sim.hpp"

namespace pfs {

/// Scalar signal of a sample that the analyses can bin.
enum class SampleFeature { x, z, theta, vx, vz, omega, fx, fz, tau };

inline double sample_value(const DemoSample& s, SampleFeature f) {
  switch (f) {
    case SampleFeature::x: return s.pose.x;
    case SampleFeature::z: return s.pose.z;
    case SampleFeature::theta: return s.pose.theta;
    case SampleFeature::vx: return s.twist.vx;
    case SampleFeature::vz: return s.twist.vz;
    case SampleFeature::omega: return s.twist.omega;
    case SampleFeature::fx: return s.wrench.fx;
    case SampleFeature::fz: return s.wrench.fz;
    case SampleFeature::tau: return s.wrench.tau;
  }
  return 0.0;
}

inline std::optional<SampleFeature> parse_sample_feature(const std::string& name) {
  static const std::array<std::pair<const char*, SampleFeature>, 9> names{{{"x", SampleFeature::x},
                                                                            {"z", SampleFeature::z},
                                                                            {"theta", SampleFeature::theta},
                                                                            {"vx", SampleFeature::vx},
                                                                            {"vz", SampleFeature::vz},
                                                                            {"omega", SampleFeature::omega},
                                                                            {"fx", SampleFeature::fx},
                                                                            {"fz", SampleFeature::fz},
                                                                            {"tau", SampleFeature::tau}}};
  for (const auto& [n, f] : names)
    if (name == n) return f;
  return std::nullopt;
}

/// Linear-interpolation quantile of sorted data (the common "type 7").
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw ConfigError("quantile of empty data");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// Duration quartiles and the five training subsets built from them. The
/// subsets hold indices into the dataset, in dataset order.
struct DurationPartition {
  double q1 = 0.0, q2 = 0.0, q3 = 0.0;
  static constexpr std::array<const char*, 5> names{"0-Q1", "Q1-Q2", "Q2-Q3", "Q3-inf", "all"};
  std::array<std::vector<std::size_t>, 5> parts;
};

inline DurationPartition partition_by_duration(const Dataset& ds) {
  if (ds.empty()) throw ConfigError("partition_by_duration: empty dataset");
  std::vector<double> durations;
  durations.reserve(ds.size());
  for (const auto& d : ds.demos) durations.push_back(d.duration());
  std::vector<double> sorted = durations;
  std::sort(sorted.begin(), sorted.end());
  DurationPartition p;
  p.q1 = quantile_sorted(sorted, 0.25);
  p.q2 = quantile_sorted(sorted, 0.50);
  p.q3 = quantile_sorted(sorted, 0.75);
  for (std::size_t i = 0; i < durations.size(); ++i) {
    const double d = durations[i];
    const std::size_t part = d <= p.q1 ? 0 : (d <= p.q2 ? 1 : (d <= p.q3 ? 2 : 3));
    p.parts[part].push_back(i);
    p.parts[4].push_back(i);
  }
  return p;
}

inline Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
  Dataset out;
  out.demos.reserve(indices.size());
  for (auto i : indices) out.demos.push_back(ds.demos.at(i));
  return out;
}

struct Band {
  double lo = 0.0, hi = 0.0;  ///< goal-distance extent of the bin
  std::size_t count = 0;
  double min = 0.0, max = 0.0, mean = 0.0;
  bool empty() const { return count == 0; }
};

/// Bins every sample by its goal distance over [0, max distance] and reports
/// min/max/mean of the selected feature per bin.
inline std::vector<Band> band_plot(const Dataset& ds, SampleFeature f, int bins,
                                   std::optional<double> max_distance = std::nullopt) {
  if (bins < 1) throw ConfigError("band_plot: bins must be >= 1");
  double top = 0.0;
  if (max_distance) {
    top = *max_distance;
  } else {
    for (const auto& d : ds.demos)
      for (const auto& s : d.samples) top = std::max(top, goal_distance(s.pose));
  }
  if (!(top > 0.0)) top = 1.0;
  const double width = top / bins;
  std::vector<Band> out(static_cast<std::size_t>(bins));
  std::vector<double> sum(out.size(), 0.0);
  for (std::size_t b = 0; b < out.size(); ++b) {
    out[b].lo = static_cast<double>(b) * width;
    out[b].hi = static_cast<double>(b + 1) * width;
  }
  for (const auto& d : ds.demos) {
    for (const auto& s : d.samples) {
      const double g = goal_distance(s.pose);
      if (g > top) continue;
      auto b = std::min(static_cast<std::size_t>(g / width), out.size() - 1);
      const double v = sample_value(s, f);
      Band& band = out[b];
      if (band.count == 0) {
        band.min = band.max = v;
      } else {
        band.min = std::min(band.min, v);
        band.max = std::max(band.max, v);
      }
      sum[b] += v;
      ++band.count;
    }
  }
  for (std::size_t b = 0; b < out.size(); ++b)
    if (out[b].count) out[b].mean = sum[b] / static_cast<double>(out[b].count);
  return out;
}

/// Count grid of (goal distance, feature value) pairs. Column index runs over
/// goal distance, row index over the feature value.
struct OccurrenceGrid {
  int width = 0, height = 0;
  double dist_lo = 0.0, dist_hi = 0.0;
  double value_lo = 0.0, value_hi = 0.0;
  std::vector<std::size_t> counts;  ///< row-major, height rows of width cells

  std::size_t at(int col, int row) const {
    return counts[static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col)];
  }
  std::size_t total() const {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }
};

namespace detail {

inline int grid_index(double v, double lo, double hi, int n) {
  if (!(hi > lo)) return 0;
  int i = static_cast<int>(std::floor((v - lo) / (hi - lo) * n));
  return std::clamp(i, 0, n - 1);
}

}  // namespace detail

struct GridRange {
  double lo = 0.0, hi = 0.0;
};

/// Samples outside the supplied ranges are ignored; ranges default to the
/// data extent so that every sample lands in the grid.
inline OccurrenceGrid occurrence_grid(const Dataset& ds, SampleFeature f, int width = 180, int height = 60,
                                      std::optional<GridRange> dist_range = std::nullopt,
                                      std::optional<GridRange> value_range = std::nullopt) {
  if (width < 1 || height < 1) throw ConfigError("occurrence_grid: grid must be at least 1x1");
  OccurrenceGrid g;
  g.width = width;
  g.height = height;
  double dlo = INFINITY, dhi = -INFINITY, vlo = INFINITY, vhi = -INFINITY;
  for (const auto& d : ds.demos) {
    for (const auto& s : d.samples) {
      const double gd = goal_distance(s.pose), v = sample_value(s, f);
      dlo = std::min(dlo, gd);
      dhi = std::max(dhi, gd);
      vlo = std::min(vlo, v);
      vhi = std::max(vhi, v);
    }
  }
  if (dist_range) {
    dlo = dist_range->lo;
    dhi = dist_range->hi;
  }
  if (value_range) {
    vlo = value_range->lo;
    vhi = value_range->hi;
  }
  if (!std::isfinite(dlo)) dlo = dhi = 0.0;
  if (!std::isfinite(vlo)) vlo = vhi = 0.0;
  g.dist_lo = dlo;
  g.dist_hi = dhi;
  g.value_lo = vlo;
  g.value_hi = vhi;
  g.counts.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
  for (const auto& d : ds.demos) {
    for (const auto& s : d.samples) {
      const double gd = goal_distance(s.pose), v = sample_value(s, f);
      if (gd < dlo || gd > dhi || v < vlo || v > vhi) continue;
      const int col = detail::grid_index(gd, dlo, dhi, width);
      const int row = detail::grid_index(v, vlo, vhi, height);
      ++g.counts[static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col)];
    }
  }
  return g;
}

}  // namespace pfs
