// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "protoedit/tensor.hpp"

namespace protoedit {

/// Flat (pointer, size) view of every block, in visit order.
template <class T, class Params>
std::vector<std::span<T>> flat_blocks(Params& params) {
  std::vector<std::span<T>> out;
  params.visit([&](const std::string&, auto& m) {
    out.emplace_back(m.data(), static_cast<std::size_t>(m.size()));
  });
  return out;
}

template <class T, class Params>
T global_norm(Params& params) {
  T sq = 0;
  for (auto b : flat_blocks<T>(params))
    for (T v : b) sq += v * v;
  return std::sqrt(sq);
}

/// Rescales all blocks so the global L2 norm is at most max_norm. Returns the
/// norm before clipping.
template <class T, class Params>
T clip_global_norm(Params& grads, T max_norm) {
  const T norm = global_norm<T>(grads);
  if (norm > max_norm) {
    const T s = max_norm / norm;
    for (auto b : flat_blocks<T>(grads))
      for (T& v : b) v *= s;
  }
  return norm;
}

/// Adam with bias correction (Kingma & Ba defaults).
template <class T, class Params>
class Adam {
 public:
  Adam(const Params& shape_like, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : m_(shape_like), v_(shape_like), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.set_zero();
    v_.set_zero();
  }

  void step(Params& params, Params& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const T step = static_cast<T>(lr_ * std::sqrt(c2) / c1);
    const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_), e = static_cast<T>(eps_);
    auto p = flat_blocks<T>(params);
    auto g = flat_blocks<T>(grads);
    auto m = flat_blocks<T>(m_);
    auto v = flat_blocks<T>(v_);
    for (std::size_t b = 0; b < p.size(); ++b) {
      for (std::size_t i = 0; i < p[b].size(); ++i) {
        const T gi = g[b][i];
        m[b][i] = b1 * m[b][i] + (T(1) - b1) * gi;
        v[b][i] = b2 * v[b][i] + (T(1) - b2) * gi * gi;
        p[b][i] -= step * m[b][i] / (std::sqrt(v[b][i]) + e);
      }
    }
  }

  [[nodiscard]] double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  [[nodiscard]] long steps() const { return t_; }

 private:
  Params m_;
  Params v_;
  double lr_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace protoedit
