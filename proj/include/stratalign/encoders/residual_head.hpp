// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Residual linear block shared by both encoders:
//
//   h = f·W_in + b_in
//   z = LayerNorm(h + Dropout(GELU(h·W_res + b_res)))
//
// The skip connection bypasses the GELU/dropout branch; LayerNorm comes last.

#include "stratalign/core/ops.hpp"

namespace stratalign {

template <class T>
struct ResidualHeadParams {
  Tensor<T> w_in;   // [F x D]
  Tensor<T> b_in;   // [D]
  Tensor<T> w_res;  // [D x D]
  Tensor<T> b_res;  // [D]
  Tensor<T> gamma;  // [D]
  Tensor<T> beta;   // [D]

  std::size_t in_features() const { return w_in.dim(0); }
  std::size_t width() const { return w_in.dim(1); }

  template <class F>
  void visit(F&& f, const char* in_name = "W0", const char* in_bias = "b0") {
    f(in_name, w_in, true);
    f(in_bias, b_in, false);
    f("W1", w_res, true);
    f("b1", b_res, false);
    f("gamma", gamma, false);
    f("beta", beta, false);
  }
};

template <class T>
struct ResidualHeadCache {
  Tensor<T> input;     // [M x F]
  Tensor<T> hidden;    // h
  Tensor<T> pre_act;   // h·W_res + b_res
  Tensor<T> activated; // GELU(pre_act), before dropout
  Tensor<T> mask;      // empty when dropout is off
  LayerNormCache<T> norm;
};

template <class T>
Tensor<T> residual_head_forward(const ResidualHeadParams<T>& p, const Tensor<T>& input, double dropout_p, Mode mode,
                                Rng* rng, ResidualHeadCache<T>& cache) {
  if (input.rank() != 2 || input.dim(1) != p.in_features())
    throw ShapeError("residual head: input " + shape_str(input.shape()) + " vs W_in " + shape_str(p.w_in.shape()));
  cache.input = input;
  cache.hidden = matmul(input, p.w_in);
  add_row_bias(cache.hidden, p.b_in);
  cache.pre_act = matmul(cache.hidden, p.w_res);
  add_row_bias(cache.pre_act, p.b_res);
  cache.activated = gelu(cache.pre_act);
  Tensor<T> sum = cache.hidden;
  if (mode == Mode::train && dropout_p > 0.0) {
    if (!rng) throw UsageError("residual head: train-mode dropout needs an rng");
    cache.mask = dropout_mask<T>(cache.activated.shape(), dropout_p, *rng);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += cache.activated[i] * cache.mask[i];
  } else {
    cache.mask = Tensor<T>();
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += cache.activated[i];
  }
  return layer_norm(sum, p.gamma, p.beta, static_cast<T>(kLayerNormEps), &cache.norm);
}

/// Accumulates parameter gradients into `grads` and returns d(input).
template <class T>
Tensor<T> residual_head_backward(const ResidualHeadParams<T>& p, const ResidualHeadCache<T>& cache,
                                 const Tensor<T>& grad_out, ResidualHeadParams<T>& grads) {
  LayerNormGrads<T> ln = layer_norm_backward(cache.norm, p.gamma, grad_out);
  grads.gamma = std::move(ln.gamma);
  grads.beta = std::move(ln.beta);
  const Tensor<T>& d_sum = ln.input;
  Tensor<T> d_act = cache.mask.empty() ? d_sum : multiply(d_sum, cache.mask);
  Tensor<T> d_pre = gelu_backward(cache.pre_act, d_act);
  grads.w_res = matmul_tn(cache.hidden, d_pre);
  grads.b_res = sum_rows(d_pre);
  Tensor<T> d_hidden = matmul_nt(d_pre, p.w_res);
  add_inplace(d_hidden, d_sum);
  grads.w_in = matmul_tn(cache.input, d_hidden);
  grads.b_in = sum_rows(d_hidden);
  return matmul_nt(d_hidden, p.w_in);
}

}  // namespace stratalign
