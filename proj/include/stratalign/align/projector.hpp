// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "stratalign/core/ops.hpp"
#include "stratalign/encoders/encoders.hpp"

namespace stratalign {

enum class ProjectorMode { linear, identity };

inline std::string to_string(ProjectorMode m) { return m == ProjectorMode::linear ? "linear" : "identity"; }

inline ProjectorMode parse_projector(const std::string& s) {
  if (s == "linear") return ProjectorMode::linear;
  if (s == "identity") return ProjectorMode::identity;
  throw UsageError("unknown projector mode '" + s + "' (expected linear or identity)");
}

/// Affine maps into the shared space: v = z_N·W_N + b_N, w = z_I·W_I + b_I.
/// Identity mode has no parameters and passes both embeddings through.
template <class T>
struct ProjectorParams {
  ProjectorMode mode = ProjectorMode::linear;
  Tensor<T> w_neural;  // [D x d_s]
  Tensor<T> b_neural;  // [d_s]
  Tensor<T> w_image;   // [D_l x d_s]
  Tensor<T> b_image;   // [d_s]

  template <class F>
  void visit(F&& f) {
    if (mode == ProjectorMode::identity) return;
    f("W_N", w_neural, true);
    f("b_N", b_neural, false);
    f("W_I", w_image, true);
    f("b_I", b_image, false);
  }
};

template <class T>
ProjectorParams<T> init_projector(ProjectorMode mode, std::size_t neural_dim, std::size_t image_dim, std::size_t shared_dim,
                                  Rng& rng) {
  ProjectorParams<T> p;
  p.mode = mode;
  if (mode == ProjectorMode::identity) {
    if (neural_dim != image_dim || image_dim != shared_dim)
      throw UsageError("identity projector needs D == D_l == d_s, got " + std::to_string(neural_dim) + ", " +
                       std::to_string(image_dim) + ", " + std::to_string(shared_dim));
    return p;
  }
  p.w_neural = rng_normal<T>({neural_dim, shared_dim}, rng, glorot_std(neural_dim, shared_dim));
  p.b_neural = Tensor<T>({shared_dim});
  p.w_image = rng_normal<T>({image_dim, shared_dim}, rng, glorot_std(image_dim, shared_dim));
  p.b_image = Tensor<T>({shared_dim});
  return p;
}

template <class T>
struct Projection {
  Tensor<T> v;
  Tensor<T> w;
};

template <class T>
Projection<T> project(const ProjectorParams<T>& p, const Tensor<T>& z_neural, const Tensor<T>& z_image) {
  if (z_neural.rows() != z_image.rows()) throw ShapeError("project: neural and image batches differ in size");
  if (p.mode == ProjectorMode::identity) {
    if (z_neural.shape() != z_image.shape()) throw ShapeError("project: identity mode needs equal widths");
    return {z_neural, z_image};
  }
  Projection<T> out{matmul(z_neural, p.w_neural), matmul(z_image, p.w_image)};
  add_row_bias(out.v, p.b_neural);
  add_row_bias(out.w, p.b_image);
  return out;
}

/// Neural-side projection only, for encoding queries.
template <class T>
Tensor<T> project_neural(const ProjectorParams<T>& p, const Tensor<T>& z_neural) {
  if (p.mode == ProjectorMode::identity) return z_neural;
  Tensor<T> v = matmul(z_neural, p.w_neural);
  add_row_bias(v, p.b_neural);
  return v;
}

template <class T>
Tensor<T> project_image(const ProjectorParams<T>& p, const Tensor<T>& z_image) {
  if (p.mode == ProjectorMode::identity) return z_image;
  Tensor<T> w = matmul(z_image, p.w_image);
  add_row_bias(w, p.b_image);
  return w;
}

template <class T>
struct ProjectorBackward {
  ProjectorParams<T> grads;
  Tensor<T> neural;  // dL/dz_N
  Tensor<T> image;   // dL/dz_I
};

template <class T>
ProjectorBackward<T> project_backward(const ProjectorParams<T>& p, const Tensor<T>& z_neural, const Tensor<T>& z_image,
                                      const Tensor<T>& grad_v, const Tensor<T>& grad_w) {
  ProjectorBackward<T> out;
  out.grads.mode = p.mode;
  if (p.mode == ProjectorMode::identity) {
    out.neural = grad_v;
    out.image = grad_w;
    return out;
  }
  out.grads.w_neural = matmul_tn(z_neural, grad_v);
  out.grads.b_neural = sum_rows(grad_v);
  out.grads.w_image = matmul_tn(z_image, grad_w);
  out.grads.b_image = sum_rows(grad_w);
  out.neural = matmul_nt(grad_v, p.w_neural);
  out.image = matmul_nt(grad_w, p.w_image);
  return out;
}

}  // namespace stratalign
