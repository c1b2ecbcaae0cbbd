// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "protoedit/tensor.hpp"

namespace protoedit {

/// Single-layer GRU cell. Row blocks of `w`, `u` and `b` are ordered
/// update gate, reset gate, candidate:
///
///   z  = σ(W_z x + U_z h + b_z)
///   r  = σ(W_r x + U_r h + b_r)
///   n  = tanh(W_n x + r ⊙ (U_n h) + b_n)
///   h' = (1 - z) ⊙ n + z ⊙ h
template <class T>
struct GruParams {
  Mat<T> w;  // 3H x in
  Mat<T> u;  // 3H x H
  Vec<T> b;  // 3H

  GruParams() = default;
  GruParams(Index input, Index hidden)
      : w(Mat<T>::Zero(3 * hidden, input)),
        u(Mat<T>::Zero(3 * hidden, hidden)),
        b(Vec<T>::Zero(3 * hidden)) {}

  [[nodiscard]] Index input_size() const { return w.cols(); }
  [[nodiscard]] Index hidden_size() const { return u.cols(); }

  template <class Rng>
  void init(Rng& rng) {
    glorot_uniform(w, rng);
    glorot_uniform(u, rng);
    b.setZero();
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".w", w);
    f(prefix + ".u", u);
    f(prefix + ".b", b);
  }
  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + ".w", w);
    f(prefix + ".u", u);
    f(prefix + ".b", b);
  }
};

template <class T>
struct GruStepCache {
  Vec<T> x;
  Vec<T> h_prev;
  Vec<T> z;
  Vec<T> r;
  Vec<T> un;  // U_n h_prev
  Vec<T> n;
};

template <class T, class DerivedX, class DerivedH>
Vec<T> gru_step(const GruParams<T>& p, const Eigen::MatrixBase<DerivedX>& x,
                const Eigen::MatrixBase<DerivedH>& h_prev, GruStepCache<T>* cache = nullptr) {
  const Index H = p.hidden_size();
  const Vec<T> wx = p.w * x + p.b;
  const Vec<T> uzr = p.u.topRows(2 * H) * h_prev;
  const Vec<T> un = p.u.bottomRows(H) * h_prev;
  const Vec<T> z = sigmoid_array((wx.head(H) + uzr.head(H)).array()).matrix();
  const Vec<T> r = sigmoid_array((wx.segment(H, H) + uzr.tail(H)).array()).matrix();
  const Vec<T> n = (wx.tail(H).array() + r.array() * un.array()).tanh().matrix();
  Vec<T> h = ((T(1) - z.array()) * n.array() + z.array() * h_prev.array()).matrix();
  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->z = z;
    cache->r = r;
    cache->un = un;
    cache->n = n;
  }
  return h;
}

/// Accumulates parameter gradients into `grad` and returns dL/dx and dL/dh_prev
/// through the out-parameters (overwritten, not accumulated).
template <class T>
void gru_step_backward(const GruParams<T>& p, const GruStepCache<T>& c, const Vec<T>& dh,
                       GruParams<T>& grad, Vec<T>& dx, Vec<T>& dh_prev) {
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  const Index H = p.hidden_size();
  const Arr z = c.z.array();
  const Arr r = c.r.array();
  const Arr n = c.n.array();
  const Arr d = dh.array();

  Vec<T> da(3 * H);  // pre-activation gradients, same row layout as w/u/b
  const Arr dn = d * (T(1) - z);
  const Arr dz = d * (c.h_prev.array() - n);
  const Arr dan = dn * (T(1) - n * n);
  da.tail(H) = dan.matrix();
  const Vec<T> dun = (dan * r).matrix();
  da.segment(H, H) = (dan * c.un.array() * r * (T(1) - r)).matrix();
  da.head(H) = (dz * z * (T(1) - z)).matrix();

  grad.w.noalias() += da * c.x.transpose();
  grad.b += da;
  grad.u.topRows(2 * H).noalias() += da.head(2 * H) * c.h_prev.transpose();
  grad.u.bottomRows(H).noalias() += dun * c.h_prev.transpose();

  dx.noalias() = p.w.transpose() * da;
  dh_prev = (d * z).matrix();
  dh_prev.noalias() += p.u.topRows(2 * H).transpose() * da.head(2 * H);
  dh_prev.noalias() += p.u.bottomRows(H).transpose() * dun;
}

}  // namespace protoedit
