#pragma once

#include <cmath>
#include <cstdint>

#include "pfs/net/model.hpp"

namespace pfs::train {

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First and second moment accumulators shaped like the parameters.
struct AdamState {
  net::NetParams m;
  net::NetParams v;
  std::int64_t step = 0;

  static AdamState like(const net::NetParams& p) { return {net::NetParams::zeros_like(p), net::NetParams::zeros_like(p), 0}; }
};

/// Euclidean norm over every gradient entry.
inline double global_norm(net::NetParams& g) {
  double sq = 0.0;
  for (auto& t : net::tensors(g)) sq += t.values.squaredNorm();
  return std::sqrt(sq);
}

/// Rescales the gradient so its global norm is at most max_norm. Returns
/// the norm before clipping.
inline double clip_global_norm(net::NetParams& g, double max_norm) {
  const double n = global_norm(g);
  if (n > max_norm) {
    const double s = max_norm / n;
    for (auto& t : net::tensors(g)) t.values *= s;
  }
  return n;
}

/// One bias-corrected Adam update in place.
inline void adam_step(net::NetParams& params, net::NetParams& grads, AdamState& st, const AdamConfig& cfg) {
  ++st.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  auto pv = net::tensors(params);
  auto gv = net::tensors(grads);
  auto mv = net::tensors(st.m);
  auto vv = net::tensors(st.v);
  for (std::size_t t = 0; t < pv.size(); ++t) {
    auto g = gv[t].values.array();
    mv[t].values.array() = cfg.beta1 * mv[t].values.array() + (1.0 - cfg.beta1) * g;
    vv[t].values.array() = cfg.beta2 * vv[t].values.array() + (1.0 - cfg.beta2) * g.square();
    pv[t].values.array() -=
        cfg.learning_rate * (mv[t].values.array() / c1) / ((vv[t].values.array() / c2).sqrt() + cfg.epsilon);
  }
}

}  // namespace pfs::train
