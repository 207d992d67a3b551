#pragma once

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pfs/error.hpp"

namespace pfs::net {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Gate order used for every per-gate array.
enum Gate : int { forget = 0, input = 1, output = 2, cell = 3 };
inline constexpr std::array<const char*, 4> gate_names{"f", "i", "o", "c"};

/// Weights of a single LSTM layer with m cells and c inputs.
struct LstmParams {
  std::array<Matrix, 4> W;  ///< m x c, input weights per gate
  std::array<Matrix, 4> U;  ///< m x m, recurrent weights per gate
  std::array<Vector, 4> b;  ///< m, biases per gate

  int hidden() const { return static_cast<int>(U[0].rows()); }
  int inputs() const { return static_cast<int>(W[0].cols()); }

  static LstmParams zeros(int m, int c) {
    LstmParams p;
    for (int g = 0; g < 4; ++g) {
      p.W[g] = Matrix::Zero(m, c);
      p.U[g] = Matrix::Zero(m, m);
      p.b[g] = Vector::Zero(m);
    }
    return p;
  }

  void validate() const {
    const auto m = U[0].rows();
    const auto c = W[0].cols();
    if (m < 1 || c < 1) throw DimensionError("LstmParams: empty layer");
    for (int g = 0; g < 4; ++g) {
      if (W[g].rows() != m || W[g].cols() != c || U[g].rows() != m || U[g].cols() != m || b[g].size() != m)
        throw DimensionError(std::string("LstmParams: inconsistent shapes for gate ") + gate_names[g]);
    }
  }

  friend bool operator==(const LstmParams& a, const LstmParams& b) {
    for (int g = 0; g < 4; ++g)
      if (a.W[g] != b.W[g] || a.U[g] != b.U[g] || a.b[g] != b.b[g]) return false;
    return true;
  }
};

/// Hidden and cell state of a batch: one column per sequence.
struct LstmState {
  Matrix h;
  Matrix c;

  static LstmState zeros(int m, int batch = 1) { return {Matrix::Zero(m, batch), Matrix::Zero(m, batch)}; }
  int batch() const { return static_cast<int>(h.cols()); }
};

/// Activations of one unrolled step, kept for backpropagation.
struct LstmStepCache {
  Matrix x, h_prev, c_prev;
  Matrix f, i, o, g;  ///< gate activations, g = tanh cell candidate
  Matrix c, tanh_c;
};

using LstmCache = std::vector<LstmStepCache>;

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

namespace detail {

inline Matrix preactivation(const LstmParams& p, int g, const Matrix& x, const Matrix& h) {
  Matrix a = p.W[g] * x;
  a.colwise() += p.b[g];
  a.noalias() += p.U[g] * h;
  return a;
}

inline LstmState step_impl(const LstmParams& p, const Matrix& x, const LstmState& s, LstmStepCache* cache) {
  if (x.rows() != p.inputs())
    throw DimensionError("lstm: input has " + std::to_string(x.rows()) + " features, layer expects " +
                         std::to_string(p.inputs()));
  if (s.h.rows() != p.hidden() || s.c.rows() != p.hidden() || s.h.cols() != x.cols() || s.c.cols() != x.cols())
    throw DimensionError("lstm: state does not match layer or batch size");
  Matrix f = preactivation(p, forget, x, s.h).unaryExpr([](double v) { return sigmoid(v); });
  Matrix i = preactivation(p, input, x, s.h).unaryExpr([](double v) { return sigmoid(v); });
  Matrix o = preactivation(p, output, x, s.h).unaryExpr([](double v) { return sigmoid(v); });
  Matrix g = preactivation(p, cell, x, s.h).array().tanh().matrix();
  LstmState next;
  next.c = (f.array() * s.c.array() + i.array() * g.array()).matrix();
  Matrix tanh_c = next.c.array().tanh().matrix();
  next.h = (o.array() * tanh_c.array()).matrix();
  if (cache) {
    cache->x = x;
    cache->h_prev = s.h;
    cache->c_prev = s.c;
    cache->f = std::move(f);
    cache->i = std::move(i);
    cache->o = std::move(o);
    cache->g = std::move(g);
    cache->c = next.c;
    cache->tanh_c = std::move(tanh_c);
  }
  return next;
}

}  // namespace detail

/// One recurrent step; `x` holds one input column per sequence.
inline LstmState step(const LstmParams& p, const Matrix& x, const LstmState& s) {
  return detail::step_impl(p, x, s, nullptr);
}

struct LstmForward {
  LstmState state;  ///< encoding (h_t, c_t) after the last input
  LstmCache cache;
};

/// Runs the whole sequence and keeps only the final state plus the cache.
inline LstmForward forward(const LstmParams& p, const std::vector<Matrix>& seq, const LstmState& init) {
  if (seq.empty()) throw DimensionError("lstm forward: empty sequence");
  LstmForward out;
  out.cache.resize(seq.size());
  LstmState s = init;
  for (std::size_t t = 0; t < seq.size(); ++t) s = detail::step_impl(p, seq[t], s, &out.cache[t]);
  out.state = std::move(s);
  return out;
}

inline LstmForward forward(const LstmParams& p, const std::vector<Matrix>& seq) {
  const int batch = seq.empty() ? 1 : static_cast<int>(seq.front().cols());
  return forward(p, seq, LstmState::zeros(p.hidden(), batch));
}

struct LstmBackward {
  LstmParams grads;
  std::vector<Matrix> input_grads;  ///< dL/dx_t per step
  LstmState init_grads;             ///< dL/d(h_0, c_0)
};

/// Backpropagation through time from upstream gradients on the final (h, c).
inline LstmBackward backward(const LstmParams& p, const LstmCache& cache, const Matrix& grad_h, const Matrix& grad_c) {
  if (cache.empty()) throw DimensionError("lstm backward: empty cache");
  const auto m = p.hidden();
  if (grad_h.rows() != m || grad_c.rows() != m || grad_h.cols() != cache.back().h_prev.cols() ||
      grad_c.cols() != grad_h.cols() || cache.back().x.rows() != p.inputs() || cache.back().f.rows() != m)
    throw DimensionError("lstm backward: gradients or cache do not match the layer");

  LstmBackward out;
  out.grads = LstmParams::zeros(m, p.inputs());
  out.input_grads.resize(cache.size());
  Matrix dh = grad_h;
  Matrix dc = grad_c;
  std::array<Matrix, 4> da;
  for (std::size_t k = cache.size(); k-- > 0;) {
    const LstmStepCache& s = cache[k];
    const auto o = s.o.array(), f = s.f.array(), i = s.i.array(), g = s.g.array(), tc = s.tanh_c.array();
    dc.array() += dh.array() * o * (1.0 - tc.square());
    da[output] = (dh.array() * tc * o * (1.0 - o)).matrix();
    da[forget] = (dc.array() * s.c_prev.array() * f * (1.0 - f)).matrix();
    da[input] = (dc.array() * g * i * (1.0 - i)).matrix();
    da[cell] = (dc.array() * i * (1.0 - g.square())).matrix();

    Matrix dx = Matrix::Zero(p.inputs(), s.x.cols());
    Matrix dh_prev = Matrix::Zero(m, s.x.cols());
    for (int gate = 0; gate < 4; ++gate) {
      out.grads.W[gate].noalias() += da[gate] * s.x.transpose();
      out.grads.U[gate].noalias() += da[gate] * s.h_prev.transpose();
      out.grads.b[gate] += da[gate].rowwise().sum();
      dx.noalias() += p.W[gate].transpose() * da[gate];
      dh_prev.noalias() += p.U[gate].transpose() * da[gate];
    }
    out.input_grads[k] = std::move(dx);
    dc = (dc.array() * f).matrix();
    dh = std::move(dh_prev);
  }
  out.init_grads = {std::move(dh), std::move(dc)};
  return out;
}

/// W and U entries uniform in +-1/sqrt(m); biases zero except the forget
/// gate bias, which starts at 1.
template <class Rng>
LstmParams init_lstm(int m, int c, Rng& rng) {
  if (m < 1 || c < 1) throw ConfigError("init_lstm: m and c must be >= 1");
  const double r = 1.0 / std::sqrt(static_cast<double>(m));
  std::uniform_real_distribution<double> u(-r, r);
  LstmParams p = LstmParams::zeros(m, c);
  for (int g = 0; g < 4; ++g) {
    for (Eigen::Index j = 0; j < p.W[g].cols(); ++j)
      for (Eigen::Index k = 0; k < p.W[g].rows(); ++k) p.W[g](k, j) = u(rng);
    for (Eigen::Index j = 0; j < p.U[g].cols(); ++j)
      for (Eigen::Index k = 0; k < p.U[g].rows(); ++k) p.U[g](k, j) = u(rng);
  }
  p.b[forget].setOnes();
  return p;
}

}  // namespace pfs::net
