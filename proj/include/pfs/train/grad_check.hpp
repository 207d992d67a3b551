#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "pfs/net/model.hpp"
#include "pfs/train/reference_loss.hpp"

namespace pfs::train {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  Eigen::Index worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// Relative error of one coordinate. Coordinates whose gradients are both
/// below `floor` in magnitude are compared on the absolute scale `floor`.
inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central finite differences over every scalar parameter against the
/// analytic gradient of the mean NLL of the given batch. The perturbed
/// losses come from `reference_loss<Scalar>`; the default extended
/// precision keeps the difference quotient's round-off well below the
/// tolerance even for coordinates with tiny gradients.
template <class Scalar = long double>
GradCheckResult grad_check(const net::NetParams& params, const std::vector<net::Matrix>& seq,
                           const net::Matrix& labels, double eps = 1e-5, double floor = 1e-12) {
  const net::LossGrad lg = net::loss_and_grad(params, seq, labels);
  net::NetParams grads = lg.grads;
  net::NetParams probe = params;
  auto gviews = net::tensors(grads);
  auto pviews = net::tensors(probe);
  GradCheckResult res;
  for (std::size_t t = 0; t < pviews.size(); ++t) {
    auto& pv = pviews[t].values;
    for (Eigen::Index i = 0; i < pv.size(); ++i) {
      const double orig = pv[i];
      pv[i] = orig + eps;
      const Scalar up = reference_loss<Scalar>(probe, seq, labels);
      pv[i] = orig - eps;
      const Scalar down = reference_loss<Scalar>(probe, seq, labels);
      pv[i] = orig;
      // Divide by the actually represented step.
      const Scalar step = static_cast<Scalar>(orig + eps) - static_cast<Scalar>(orig - eps);
      const double numeric = static_cast<double>((up - down) / step);
      const double analytic = gviews[t].values[i];
      const double rel = relative_error(analytic, numeric, floor);
      ++res.checked;
      if (rel > res.max_rel_error || res.checked == 1) {
        res.max_rel_error = rel;
        res.worst_tensor = pviews[t].name;
        res.worst_index = i;
        res.worst_analytic = analytic;
        res.worst_numeric = numeric;
      }
    }
  }
  return res;
}

/// Shape of a random gradient-check problem: N+1 input steps per sequence.
struct GradCheckShape {
  int m = 8, c = 10, k = 3, d = 3, N = 5, batch = 2;
};

/// Draws fresh parameters, standard normal inputs and labels, then checks.
template <class Scalar = long double>
GradCheckResult random_grad_check(const GradCheckShape& sh, std::mt19937_64& rng, double eps = 1e-5) {
  if (sh.m < 1 || sh.c < 1 || sh.k < 1 || sh.d < 1 || sh.N < 0 || sh.batch < 1)
    throw ConfigError("grad check: every dimension must be positive");
  const net::NetParams p = net::init_net(sh.m, sh.c, sh.k, sh.d, rng);
  std::normal_distribution<double> n01;
  std::vector<net::Matrix> seq(static_cast<std::size_t>(sh.N) + 1, net::Matrix(sh.c, sh.batch));
  for (auto& x : seq) x = x.unaryExpr([&](double) { return n01(rng); });
  const net::Matrix y = net::Matrix(sh.d, sh.batch).unaryExpr([&](double) { return n01(rng); });
  return grad_check<Scalar>(p, seq, y, eps);
}

}  // namespace pfs::train
