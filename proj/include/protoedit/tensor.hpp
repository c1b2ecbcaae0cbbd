// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <random>

namespace protoedit {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

/// Numerically stable log-softmax (max shift, log-sum-exp). Entries equal to
/// -inf stay -inf.
template <class T>
Vec<T> log_softmax(const Vec<T>& logits) {
  const T m = logits.maxCoeff();
  const T lse = m + std::log((logits.array() - m).exp().sum());
  return (logits.array() - lse).matrix();
}

template <class T>
Vec<T> softmax(const Vec<T>& logits) {
  const T m = logits.maxCoeff();
  Vec<T> e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

/// Backward of p = softmax(e): de = p * (dp - <p, dp>).
template <class T>
Vec<T> softmax_backward(const Vec<T>& p, const Vec<T>& dp) {
  return (p.array() * (dp.array() - p.dot(dp))).matrix();
}

template <class T>
T sigmoid(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <class Derived>
auto sigmoid_array(const Eigen::ArrayBase<Derived>& x) {
  return x.unaryExpr([](auto v) { return sigmoid(v); });
}

template <class T>
constexpr T neg_inf() {
  return -std::numeric_limits<T>::infinity();
}

/// Uniform Glorot initialization.
template <class Derived, class Rng>
void glorot_uniform(Eigen::MatrixBase<Derived>& m, Rng& rng) {
  using T = typename Derived::Scalar;
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<T>(dist(rng));
}

template <class Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace protoedit
