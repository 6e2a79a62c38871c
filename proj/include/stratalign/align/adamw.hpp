// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "stratalign/core/tensor.hpp"

namespace stratalign {

/// A named trainable tensor. `decay` selects it for decoupled weight decay.
template <class T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
  bool decay;
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamWState {
  AdamWConfig config;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t step = 0;

  bool initialized() const { return !m.empty() || step > 0; }
};

template <class T>
AdamWState<T> make_adamw_state(std::span<const ParamRef<T>> params, AdamWConfig config = {}) {
  AdamWState<T> s;
  s.config = config;
  for (const auto& p : params) {
    s.m.emplace_back(p.value->shape());
    s.v.emplace_back(p.value->shape());
  }
  return s;
}

/// One decoupled-decay Adam update:
///   m ← β1·m + (1−β1)·g,  v ← β2·v + (1−β2)·g²
///   θ ← θ − lr·( m̂/(√v̂ + eps) + wd·θ )   (wd only where decay is set)
template <class T>
void adamw_step(std::span<const ParamRef<T>> params, std::span<const Tensor<T>* const> grads, AdamWState<T>& state,
                double lr, double weight_decay) {
  if (params.size() != grads.size()) throw ShapeError("adamw_step: parameter and gradient lists differ in length");
  if (state.m.size() != params.size()) {
    if (state.step != 0) throw ShapeError("adamw_step: optimizer state does not match parameter list");
    state = make_adamw_state(params, state.config);
  }
  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& theta = *params[i].value;
    const Tensor<T>& g = *grads[i];
    if (g.shape() != theta.shape() || state.m[i].shape() != theta.shape())
      throw ShapeError("adamw_step: shape mismatch for '" + params[i].name + "'");
    const double wd = params[i].decay ? weight_decay : 0.0;
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = c.beta1 * static_cast<double>(m[j]) + (1.0 - c.beta1) * gj;
      const double vj = c.beta2 * static_cast<double>(v[j]) + (1.0 - c.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double m_hat = mj / correct1;
      const double v_hat = vj / correct2;
      const double th = static_cast<double>(theta[j]);
      theta[j] = static_cast<T>(th - lr * (m_hat / (std::sqrt(v_hat) + c.eps) + wd * th));
    }
  }
}

}  // namespace stratalign
