#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pfs/error.hpp"
#include "pfs/net/lstm.hpp"

namespace pfs::net {

inline constexpr double kSigmaFloor = 1e-4;

/// Linear output layer without bias. Rows are laid out as
/// [z_alpha (k) | z_mu (k*d, component-major) | z_sigma (k)].
struct MdnParams {
  Matrix Wz;  ///< k(d+2) x 2m
  int k = 0;
  int d = 0;

  int encoding_dim() const { return static_cast<int>(Wz.cols()); }

  void validate() const {
    if (k < 1 || d < 1) throw DimensionError("MdnParams: k and d must be >= 1");
    if (Wz.rows() != k * (d + 2))
      throw DimensionError("MdnParams: W_z has " + std::to_string(Wz.rows()) + " rows, expected k(d+2) = " +
                           std::to_string(k * (d + 2)));
    if (Wz.cols() < 2 || Wz.cols() % 2 != 0) throw DimensionError("MdnParams: W_z must have 2m columns");
  }

  friend bool operator==(const MdnParams&, const MdnParams&) = default;
};

/// k-component isotropic Gaussian mixture over a d-dimensional vector.
struct MixtureParams {
  Vector alpha;      ///< k mixing weights
  Vector log_alpha;  ///< log of alpha, computed stably
  Matrix mu;         ///< d x k, one center per column
  Vector sigma;      ///< k scales, >= kSigmaFloor

  int k() const { return static_cast<int>(alpha.size()); }
  int d() const { return static_cast<int>(mu.rows()); }
};

/// Stable log(sum(exp(v))).
inline double log_sum_exp(const Vector& v) {
  const double top = v.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((v.array() - top).exp().sum());
}

/// Builds the mixture from one column of raw outputs z.
inline MixtureParams mixture_from_logits(const Vector& z, int k, int d) {
  if (z.size() != k * (d + 2)) throw DimensionError("mixture_from_logits: z has wrong length");
  MixtureParams mix;
  const Vector za = z.head(k);
  mix.log_alpha = za.array() - log_sum_exp(za);
  mix.alpha = mix.log_alpha.array().exp();
  mix.mu = Eigen::Map<const Matrix>(z.data() + k, d, k);
  mix.sigma = z.tail(k).array().exp().max(kSigmaFloor);
  return mix;
}

/// Raw head outputs for a batch of encodings: one column per sequence.
inline Matrix head_logits(const MdnParams& p, const LstmState& enc) {
  if (2 * enc.h.rows() != p.Wz.cols() || enc.c.rows() != enc.h.rows())
    throw DimensionError("mdn head: encoding has " + std::to_string(2 * enc.h.rows()) + " entries, W_z expects " +
                         std::to_string(p.Wz.cols()));
  const auto m = enc.h.rows();
  Matrix z = p.Wz.leftCols(m) * enc.h;
  z.noalias() += p.Wz.rightCols(m) * enc.c;
  return z;
}

/// Mixture for a single encoding (first column of `enc`).
inline MixtureParams head_forward(const MdnParams& p, const LstmState& enc) {
  const Matrix z = head_logits(p, {enc.h.leftCols(1), enc.c.leftCols(1)});
  return mixture_from_logits(z.col(0), p.k, p.d);
}

inline double log_component_density(const Vector& y, const Vector& mu, double sigma) {
  const double d = static_cast<double>(y.size());
  const double sq = (y - mu).squaredNorm();
  return -0.5 * d * std::log(2.0 * std::numbers::pi) - d * std::log(sigma) - sq / (2.0 * sigma * sigma);
}

/// Isotropic Gaussian density N(y; mu, sigma^2 I).
inline double component_density(const Vector& y, const Vector& mu, double sigma) {
  return std::exp(log_component_density(y, mu, sigma));
}

/// Mixture density at y.
inline double mixture_density(const MixtureParams& mix, const Vector& y) {
  double p = 0.0;
  for (int i = 0; i < mix.k(); ++i) p += mix.alpha[i] * component_density(y, mix.mu.col(i), mix.sigma[i]);
  return p;
}

/// Per-component log(alpha_i * phi_i(y)).
inline Vector log_weighted_densities(const MixtureParams& mix, const Vector& y) {
  if (y.size() != mix.d()) throw DimensionError("nll: label dimension does not match mixture");
  Vector lw(mix.k());
  for (int i = 0; i < mix.k(); ++i) lw[i] = mix.log_alpha[i] + log_component_density(y, mix.mu.col(i), mix.sigma[i]);
  return lw;
}

/// Negative log-likelihood of y, evaluated in log space.
inline double nll_loss(const MixtureParams& mix, const Vector& y) { return -log_sum_exp(log_weighted_densities(mix, y)); }

/// Gradient of the NLL of one label with respect to the raw outputs z.
inline Vector nll_grad_logits(const Vector& z, const MixtureParams& mix, const Vector& y) {
  const int k = mix.k(), d = mix.d();
  const Vector lw = log_weighted_densities(mix, y);
  const Vector resp = (lw.array() - log_sum_exp(lw)).exp();
  Vector g(z.size());
  for (int i = 0; i < k; ++i) {
    const double s2 = mix.sigma[i] * mix.sigma[i];
    const Vector diff = mix.mu.col(i) - y;
    g[i] = mix.alpha[i] - resp[i];
    g.segment(k + i * d, d) = resp[i] * diff / s2;
    const bool floored = !(std::exp(z[k + k * d + i]) > kSigmaFloor);
    g[k + k * d + i] = floored ? 0.0 : resp[i] * (static_cast<double>(d) - diff.squaredNorm() / s2);
  }
  return g;
}

struct HeadLossGrad {
  double loss = 0.0;     ///< mean NLL over the batch
  Vector losses;         ///< per-sequence NLL
  Matrix grad_Wz;        ///< d(mean loss)/dW_z
  LstmState grad_enc;    ///< d(mean loss)/d(h, c)
};

/// Mean NLL over a batch of encodings and labels (d x B) plus exact
/// gradients with respect to W_z and the encoding.
inline HeadLossGrad head_loss_grad(const MdnParams& p, const LstmState& enc, const Matrix& labels) {
  const Matrix z = head_logits(p, enc);
  const auto B = z.cols();
  if (labels.rows() != p.d || labels.cols() != B) throw DimensionError("mdn: labels must be d x batch");
  HeadLossGrad out;
  out.losses.resize(B);
  Matrix dz(z.rows(), B);
  for (Eigen::Index j = 0; j < B; ++j) {
    const Vector zj = z.col(j);
    const Vector yj = labels.col(j);
    const MixtureParams mix = mixture_from_logits(zj, p.k, p.d);
    out.losses[j] = nll_loss(mix, yj);
    dz.col(j) = nll_grad_logits(zj, mix, yj) / static_cast<double>(B);
  }
  out.loss = out.losses.mean();
  const auto m = enc.h.rows();
  out.grad_Wz.resize(p.Wz.rows(), p.Wz.cols());
  out.grad_Wz.leftCols(m).noalias() = dz * enc.h.transpose();
  out.grad_Wz.rightCols(m).noalias() = dz * enc.c.transpose();
  out.grad_enc.h.noalias() = p.Wz.leftCols(m).transpose() * dz;
  out.grad_enc.c.noalias() = p.Wz.rightCols(m).transpose() * dz;
  return out;
}

/// Draws one vector from the mixture. Temperature scales the component
/// logits by 1/tau and the variance by tau; tau = 0 returns the center of
/// the most probable component.
template <class Rng>
Vector sample(const MixtureParams& mix, Rng& rng, double temperature = 1.0) {
  if (!(temperature >= 0.0)) throw ConfigError("sample: temperature must be >= 0");
  Eigen::Index best = 0;
  mix.alpha.maxCoeff(&best);
  if (temperature == 0.0) return mix.mu.col(best);
  Vector logits = mix.log_alpha / temperature;
  logits = (logits.array() - log_sum_exp(logits)).exp();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng);
  double acc = 0.0;
  int comp = mix.k() - 1;
  for (int i = 0; i < mix.k(); ++i) {
    acc += logits[i];
    if (r < acc) {
      comp = i;
      break;
    }
  }
  std::normal_distribution<double> n(0.0, 1.0);
  Vector out = mix.mu.col(comp);
  const double scale = mix.sigma[comp] * std::sqrt(temperature);
  for (Eigen::Index j = 0; j < out.size(); ++j) out[j] += scale * n(rng);
  return out;
}

/// W_z entries uniform in +-1/sqrt(2m).
template <class Rng>
MdnParams init_mdn(int m, int k, int d, Rng& rng) {
  if (m < 1 || k < 1 || d < 1) throw ConfigError("init_mdn: m, k, d must be >= 1");
  MdnParams p;
  p.k = k;
  p.d = d;
  p.Wz.resize(k * (d + 2), 2 * m);
  const double r = 1.0 / std::sqrt(2.0 * m);
  std::uniform_real_distribution<double> u(-r, r);
  for (Eigen::Index j = 0; j < p.Wz.cols(); ++j)
    for (Eigen::Index i = 0; i < p.Wz.rows(); ++i) p.Wz(i, j) = u(rng);
  return p;
}

}  // namespace pfs::net
