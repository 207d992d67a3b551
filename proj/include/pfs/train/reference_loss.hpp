#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "pfs/net/model.hpp"

namespace pfs::train {

/// Straightforward loop implementation of the LSTM + mixture NLL forward
/// pass in an arbitrary floating type. It shares no code with the Eigen
/// path and serves as the finite-difference oracle.
template <class T>
T reference_loss(const net::NetParams& p, const std::vector<net::Matrix>& seq, const net::Matrix& labels) {
  const int m = p.m(), c = p.c(), k = p.k(), d = p.d();
  const auto B = labels.cols();
  auto sig = [](T v) { return T(1) / (T(1) + std::exp(-v)); };
  T total = 0;
  for (Eigen::Index col = 0; col < B; ++col) {
    std::vector<T> h(static_cast<std::size_t>(m), T(0)), cs(static_cast<std::size_t>(m), T(0));
    for (const auto& xm : seq) {
      std::vector<T> hn(h.size()), cn(h.size());
      for (int r = 0; r < m; ++r) {
        T a[4];
        for (int g = 0; g < 4; ++g) {
          T acc = static_cast<T>(p.lstm.b[g][r]);
          for (int j = 0; j < c; ++j) acc += static_cast<T>(p.lstm.W[g](r, j)) * static_cast<T>(xm(j, col));
          for (int j = 0; j < m; ++j) acc += static_cast<T>(p.lstm.U[g](r, j)) * h[static_cast<std::size_t>(j)];
          a[g] = acc;
        }
        const T f = sig(a[net::forget]), i = sig(a[net::input]), o = sig(a[net::output]);
        const T g = std::tanh(a[net::cell]);
        const T cnew = f * cs[static_cast<std::size_t>(r)] + i * g;
        cn[static_cast<std::size_t>(r)] = cnew;
        hn[static_cast<std::size_t>(r)] = o * std::tanh(cnew);
      }
      h = std::move(hn);
      cs = std::move(cn);
    }
    std::vector<T> z(static_cast<std::size_t>(k * (d + 2)), T(0));
    for (int r = 0; r < k * (d + 2); ++r) {
      T acc = 0;
      for (int j = 0; j < m; ++j) acc += static_cast<T>(p.head.Wz(r, j)) * h[static_cast<std::size_t>(j)];
      for (int j = 0; j < m; ++j) acc += static_cast<T>(p.head.Wz(r, m + j)) * cs[static_cast<std::size_t>(j)];
      z[static_cast<std::size_t>(r)] = acc;
    }
    T zmax = z[0];
    for (int i = 1; i < k; ++i) zmax = std::max(zmax, z[static_cast<std::size_t>(i)]);
    T zsum = 0;
    for (int i = 0; i < k; ++i) zsum += std::exp(z[static_cast<std::size_t>(i)] - zmax);
    const T log_norm = zmax + std::log(zsum);
    std::vector<T> lw(static_cast<std::size_t>(k));
    const T log2pi = std::log(T(2) * std::numbers::pi_v<T>);
    for (int i = 0; i < k; ++i) {
      T sigma = std::exp(z[static_cast<std::size_t>(k + k * d + i)]);
      if (sigma < T(net::kSigmaFloor)) sigma = T(net::kSigmaFloor);
      T sq = 0;
      for (int j = 0; j < d; ++j) {
        const T diff = static_cast<T>(labels(j, col)) - z[static_cast<std::size_t>(k + i * d + j)];
        sq += diff * diff;
      }
      lw[static_cast<std::size_t>(i)] = (z[static_cast<std::size_t>(i)] - log_norm) - T(d) / 2 * log2pi -
                                        T(d) * std::log(sigma) - sq / (2 * sigma * sigma);
    }
    T lmax = lw[0];
    for (auto v : lw) lmax = std::max(lmax, v);
    T s = 0;
    for (auto v : lw) s += std::exp(v - lmax);
    total += -(lmax + std::log(s));
  }
  return total / static_cast<T>(B);
}

}  // namespace pfs::train
