#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pfs/net/lstm.hpp"
#include "pfs/net/mdn.hpp"

namespace pfs::net {

/// LSTM encoder followed by the mixture-density head.
struct NetParams {
  LstmParams lstm;
  MdnParams head;

  int m() const { return lstm.hidden(); }
  int c() const { return lstm.inputs(); }
  int k() const { return head.k; }
  int d() const { return head.d; }

  void validate() const {
    lstm.validate();
    head.validate();
    if (head.encoding_dim() != 2 * lstm.hidden()) throw DimensionError("NetParams: W_z columns must equal 2m");
  }

  static NetParams zeros_like(const NetParams& p) {
    NetParams z;
    z.lstm = LstmParams::zeros(p.m(), p.c());
    z.head.k = p.head.k;
    z.head.d = p.head.d;
    z.head.Wz = Matrix::Zero(p.head.Wz.rows(), p.head.Wz.cols());
    return z;
  }

  friend bool operator==(const NetParams& a, const NetParams& b) { return a.lstm == b.lstm && a.head == b.head; }
};

template <class Rng>
NetParams init_net(int m, int c, int k, int d, Rng& rng) {
  NetParams p;
  p.lstm = init_lstm(m, c, rng);
  p.head = init_mdn(m, k, d, rng);
  return p;
}

/// Named flat view of one parameter tensor (column-major storage).
struct TensorView {
  std::string name;
  Eigen::Map<Vector> values;
};

/// All 13 learnable tensors in a fixed order.
inline std::vector<TensorView> tensors(NetParams& p) {
  std::vector<TensorView> out;
  auto add = [&out](std::string name, Matrix& t) { out.push_back({std::move(name), Eigen::Map<Vector>(t.data(), t.size())}); };
  auto addv = [&out](std::string name, Vector& t) { out.push_back({std::move(name), Eigen::Map<Vector>(t.data(), t.size())}); };
  for (int g = 0; g < 4; ++g) add(std::string("W_") + gate_names[g], p.lstm.W[g]);
  for (int g = 0; g < 4; ++g) add(std::string("U_") + gate_names[g], p.lstm.U[g]);
  for (int g = 0; g < 4; ++g) addv(std::string("b_") + gate_names[g], p.lstm.b[g]);
  add("W_z", p.head.Wz);
  return out;
}

inline std::size_t parameter_count(const NetParams& p) {
  const auto m = static_cast<std::size_t>(p.m()), c = static_cast<std::size_t>(p.c());
  return 4 * (m * c + m * m + m) + static_cast<std::size_t>(p.head.Wz.size());
}

struct LossGrad {
  double loss = 0.0;  ///< mean NLL over the batch
  Vector losses;      ///< per-window NLL
  NetParams grads;
};

/// Mean NLL of a batch of windows and its exact gradient.
/// `seq[t]` is c x B (one column per window), `labels` is d x B.
inline LossGrad loss_and_grad(const NetParams& p, const std::vector<Matrix>& seq, const Matrix& labels) {
  LstmForward fw = forward(p.lstm, seq);
  HeadLossGrad hg = head_loss_grad(p.head, fw.state, labels);
  LstmBackward bw = backward(p.lstm, fw.cache, hg.grad_enc.h, hg.grad_enc.c);
  LossGrad out;
  out.loss = hg.loss;
  out.losses = std::move(hg.losses);
  out.grads.lstm = std::move(bw.grads);
  out.grads.head.k = p.head.k;
  out.grads.head.d = p.head.d;
  out.grads.head.Wz = std::move(hg.grad_Wz);
  return out;
}

/// Mean NLL of a batch without gradients.
inline double batch_loss(const NetParams& p, const std::vector<Matrix>& seq, const Matrix& labels) {
  LstmState s = LstmState::zeros(p.m(), static_cast<int>(labels.cols()));
  for (const auto& x : seq) s = step(p.lstm, x, s);
  const Matrix z = head_logits(p.head, s);
  double total = 0.0;
  for (Eigen::Index j = 0; j < z.cols(); ++j)
    total += nll_loss(mixture_from_logits(z.col(j), p.k(), p.d()), labels.col(j));
  return total / static_cast<double>(z.cols());
}

}  // namespace pfs::net
