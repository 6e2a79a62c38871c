// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Symmetric contrastive objective over a batch of M matched pairs:
//
//   S_kj = cos(v_k, w_j)
//   L = -1/(2M) Σ_k [ log softmax_j(S_jk/τ)[k] + log softmax_j(S_kj/τ)[k] ]
//
// i.e. the mean of the image->neural (column) and neural->image (row)
// cross-entropies. Gradients flow through the row normalization and τ.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "stratalign/core/ops.hpp"

namespace stratalign {

template <class T>
struct ContrastiveResult {
  T loss = 0;
  Tensor<T> grad_v;
  Tensor<T> grad_w;
  T grad_temperature = 0;  // dL/dτ
};

namespace detail {

template <class T>
ContrastiveResult<T> contrastive_core(const Tensor<T>& v, const Tensor<T>& w, T temperature, bool with_grads) {
  const std::size_t m = v.rows();
  std::vector<T> norm_v, norm_w;
  const Tensor<T> v_unit = l2_normalize(v, &norm_v);
  const Tensor<T> w_unit = l2_normalize(w, &norm_w);
  const Tensor<T> sim = matmul_nt(v_unit, w_unit);
  const double inv_tau = 1.0 / static_cast<double>(temperature);

  // Cosines are bounded, so one global shift keeps every exp(logit − shift)
  // within double range; rows and columns then share a single exp pass.
  double max_sim = -1.0;
  for (T x : sim.data()) max_sim = std::max(max_sim, static_cast<double>(x));
  const double shift = max_sim * inv_tau;
  const std::size_t mm = m * m;
  Eigen::ArrayXd expd(static_cast<Eigen::Index>(mm));
  std::vector<double> row_sum(m, 0.0), col_sum(m, 0.0), diag(m);
  for (std::size_t i = 0; i < mm; ++i) expd[i] = static_cast<double>(sim[i]) * inv_tau - shift;
  for (std::size_t k = 0; k < m; ++k) diag[k] = expd[k * m + k];
  expd = expd.exp();
  for (std::size_t k = 0; k < m; ++k) {
    const double* e = expd.data() + k * m;
    for (std::size_t j = 0; j < m; ++j) {
      row_sum[k] += e[j];
      col_sum[j] += e[j];
    }
  }
  double total = 0.0;
  for (std::size_t k = 0; k < m; ++k) total += (std::log(row_sum[k]) - diag[k]) + (std::log(col_sum[k]) - diag[k]);
  ContrastiveResult<T> out;
  out.loss = static_cast<T>(total / (2.0 * static_cast<double>(m)));
  if (!std::isfinite(static_cast<double>(out.loss))) throw NumericError("contrastive_loss: non-finite loss");
  if (!with_grads) return out;

  // dL/dlogit_kj = (P_row_kj + P_col_kj − 2δ_kj) / 2M with logit = S/τ.
  Tensor<T> d_sim({m, m});
  const double scale = 1.0 / (2.0 * static_cast<double>(m));
  std::vector<double> inv_col(m);
  for (std::size_t j = 0; j < m; ++j) inv_col[j] = 1.0 / col_sum[j];
  double d_inv_tau = 0.0;  // dL/d(1/τ)
  for (std::size_t k = 0; k < m; ++k) {
    const double inv_row = 1.0 / row_sum[k];
    const double* e = expd.data() + k * m;
    const T* s = sim.data().data() + k * m;
    T* ds = d_sim.data().data() + k * m;
    for (std::size_t j = 0; j < m; ++j) {
      double g = e[j] * inv_row + e[j] * inv_col[j];
      if (k == j) g -= 2.0;
      g *= scale;
      d_inv_tau += g * static_cast<double>(s[j]);
      ds[j] = static_cast<T>(g * inv_tau);
    }
  }
  out.grad_temperature = static_cast<T>(-d_inv_tau * inv_tau * inv_tau);
  out.grad_v = l2_normalize_backward(v_unit, norm_v, matmul(d_sim, w_unit));
  out.grad_w = l2_normalize_backward(w_unit, norm_w, matmul_tn(d_sim, v_unit));
  return out;
}

}  // namespace detail

/// The operands are put in a canonical (lexicographic) order before any
/// arithmetic, so contrastive_loss(w, v) repeats the exact computation of
/// contrastive_loss(v, w) and returns the same loss with swapped gradients.
template <class T>
ContrastiveResult<T> contrastive_loss(const Tensor<T>& v, const Tensor<T>& w, T temperature, bool with_grads = true) {
  if (v.rank() != 2 || v.shape() != w.shape())
    throw ShapeError("contrastive_loss: v " + shape_str(v.shape()) + " and w " + shape_str(w.shape()) + " must match");
  if (v.rows() == 0) throw ShapeError("contrastive_loss: empty batch");
  if (!(temperature > T(0))) throw UsageError("contrastive_loss: temperature must be positive");
  const auto a = v.data(), b = w.data();
  if (!std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end()))
    return detail::contrastive_core(v, w, temperature, with_grads);
  ContrastiveResult<T> r = detail::contrastive_core(w, v, temperature, with_grads);
  std::swap(r.grad_v, r.grad_w);
  return r;
}

}  // namespace stratalign
