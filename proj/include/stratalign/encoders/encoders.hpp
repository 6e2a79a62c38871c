// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <variant>

#include "stratalign/encoders/residual_head.hpp"

namespace stratalign {

enum class Arch { eegproject, tsconv };

inline std::string to_string(Arch a) { return a == Arch::eegproject ? "eegproject" : "tsconv"; }

inline Arch parse_arch(const std::string& s) {
  if (s == "eegproject") return Arch::eegproject;
  if (s == "tsconv") return Arch::tsconv;
  throw UsageError("unknown encoder architecture '" + s + "' (expected eegproject or tsconv)");
}

struct EncoderDims {
  Arch arch = Arch::eegproject;
  std::size_t channels = 0;  // C
  std::size_t times = 0;     // T
  std::size_t dim = 1024;    // D, encoder output width
  double dropout_p = 0.3;
  // TSConv front end
  std::size_t filters = 40;
  std::size_t temporal_kernel = 25;
  std::size_t pool_window = 51;
  std::size_t pool_stride = 5;
};

/// Flattened TSConv front-end width: filters · (floor((T−k+1−pool)/stride)+1).
inline std::size_t tsconv_features(const EncoderDims& d) {
  if (d.times < d.temporal_kernel + d.pool_window - 1)
    throw ShapeError("tsconv: T=" + std::to_string(d.times) + " too short, need at least " +
                     std::to_string(d.temporal_kernel + d.pool_window - 1));
  return d.filters * pooled_length(d.times - d.temporal_kernel + 1, d.pool_window, d.pool_stride);
}

// --- EEGProject -------------------------------------------------------------
// Flatten C x T, then the residual head.

template <class T>
struct EEGProjectParams {
  ResidualHeadParams<T> head;
  std::size_t channels = 0, times = 0;
  double dropout_p = 0.3;
  std::uint64_t version = 0;

  template <class F>
  void visit(F&& f) { head.visit(f, "W0", "b0"); }
};

template <class T>
struct EEGProjectCache {
  ResidualHeadCache<T> head;
  const void* owner = nullptr;
  std::uint64_t version = 0;
};

template <class T>
Tensor<T> eegproject_forward(const EEGProjectParams<T>& p, const Tensor<T>& x, Mode mode, Rng* rng,
                             EEGProjectCache<T>& cache) {
  const std::size_t features = p.channels * p.times;
  if (x.rank() < 2 || x.row_width() != features)
    throw ShapeError("eegproject: input " + shape_str(x.shape()) + " does not flatten to " + std::to_string(features));
  cache.owner = &p;
  cache.version = p.version;
  return residual_head_forward(p.head, x.reshaped({x.dim(0), features}), p.dropout_p, mode, rng, cache.head);
}

template <class T>
Tensor<T> eegproject_backward(const EEGProjectParams<T>& p, const EEGProjectCache<T>& cache, const Tensor<T>& grad_z,
                              EEGProjectParams<T>& grads) {
  if (cache.owner != &p || cache.version != p.version) throw UsageError("eegproject_backward: stale cache");
  grads.channels = p.channels;
  grads.times = p.times;
  grads.dropout_p = p.dropout_p;
  Tensor<T> dx = residual_head_backward(p.head, cache.head, grad_z, grads.head);
  return std::move(dx).reshaped({dx.dim(0), p.channels, p.times});
}

// --- TSConv -----------------------------------------------------------------
// temporal conv (1 x k) -> avg pool (1 x window, stride) -> spatial conv
// (C x 1) -> flatten -> residual head. No nonlinearity between the stages.

template <class T>
struct TSConvParams {
  Tensor<T> k_temporal;  // [filters x 1 x 1 x k]
  Tensor<T> b_temporal;  // [filters]
  Tensor<T> k_spatial;   // [filters x filters x C x 1]
  Tensor<T> b_spatial;   // [filters]
  ResidualHeadParams<T> head;
  EncoderDims dims;
  std::uint64_t version = 0;

  template <class F>
  void visit(F&& f) {
    f("k_temporal", k_temporal, true);
    f("b_temporal", b_temporal, false);
    f("k_spatial", k_spatial, true);
    f("b_spatial", b_spatial, false);
    head.visit(f, "W_proj", "b_proj");
  }
};

template <class T>
struct TSConvCache {
  Tensor<T> input;     // [M x 1 x C x T]
  Tensor<T> temporal;  // after the temporal conv
  Tensor<T> pooled;
  ResidualHeadCache<T> head;
  const void* owner = nullptr;
  std::uint64_t version = 0;
};

inline Pool2d tsconv_pool(const EncoderDims& d) { return Pool2d{1, d.pool_window, 1, d.pool_stride}; }

template <class T>
Tensor<T> tsconv_forward(const TSConvParams<T>& p, const Tensor<T>& x, Mode mode, Rng* rng, TSConvCache<T>& cache) {
  const EncoderDims& d = p.dims;
  tsconv_features(d);
  if (x.rank() < 3 || x.row_width() != d.channels * d.times)
    throw ShapeError("tsconv: input " + shape_str(x.shape()) + " is not M x 1 x C x T with C=" +
                     std::to_string(d.channels) + ", T=" + std::to_string(d.times));
  const std::size_t m = x.dim(0);
  cache.owner = &p;
  cache.version = p.version;
  cache.input = x.reshaped({m, 1, d.channels, d.times});
  cache.temporal = conv2d(cache.input, p.k_temporal, p.b_temporal);
  cache.pooled = avgpool2d(cache.temporal, tsconv_pool(d));
  Tensor<T> spatial = conv2d(cache.pooled, p.k_spatial, p.b_spatial);  // [M x filters x 1 x P]
  const std::size_t features = spatial.size() / m;
  return residual_head_forward(p.head, std::move(spatial).reshaped({m, features}), d.dropout_p, mode, rng, cache.head);
}

template <class T>
Tensor<T> tsconv_backward(const TSConvParams<T>& p, const TSConvCache<T>& cache, const Tensor<T>& grad_z,
                          TSConvParams<T>& grads) {
  if (cache.owner != &p || cache.version != p.version) throw UsageError("tsconv_backward: stale cache");
  const EncoderDims& d = p.dims;
  grads.dims = d;
  const std::size_t m = cache.input.dim(0);
  Tensor<T> d_flat = residual_head_backward(p.head, cache.head, grad_z, grads.head);
  const std::size_t pooled_len = cache.pooled.dim(3);
  Conv2dGrads<T> spatial = conv2d_backward(cache.pooled, p.k_spatial, std::move(d_flat).reshaped({m, d.filters, 1, pooled_len}));
  grads.k_spatial = std::move(spatial.kernel);
  grads.b_spatial = std::move(spatial.bias);
  Tensor<T> d_temporal = avgpool2d_backward(cache.temporal.shape(), tsconv_pool(d), spatial.input);
  Conv2dGrads<T> temporal = conv2d_backward(cache.input, p.k_temporal, d_temporal);
  grads.k_temporal = std::move(temporal.kernel);
  grads.b_temporal = std::move(temporal.bias);
  return std::move(temporal.input).reshaped({m, 1, d.channels, d.times});
}

// --- Architecture-agnostic surface -----------------------------------------

template <class T>
using EncoderParams = std::variant<EEGProjectParams<T>, TSConvParams<T>>;

template <class T>
using EncoderCache = std::variant<EEGProjectCache<T>, TSConvCache<T>>;

template <class T>
Tensor<T> encoder_forward(const EncoderParams<T>& params, const Tensor<T>& x, Mode mode, Rng* rng,
                          EncoderCache<T>& cache) {
  if (const auto* p = std::get_if<EEGProjectParams<T>>(&params)) {
    cache.template emplace<EEGProjectCache<T>>();
    return eegproject_forward(*p, x, mode, rng, std::get<EEGProjectCache<T>>(cache));
  }
  cache.template emplace<TSConvCache<T>>();
  return tsconv_forward(std::get<TSConvParams<T>>(params), x, mode, rng, std::get<TSConvCache<T>>(cache));
}

template <class T>
Tensor<T> encoder_forward(const EncoderParams<T>& params, const Tensor<T>& x, Mode mode, Rng* rng) {
  EncoderCache<T> cache;
  return encoder_forward(params, x, mode, rng, cache);
}

/// Writes gradients into `grads` (same alternative as params) and returns d(x).
template <class T>
Tensor<T> encoder_backward(const EncoderParams<T>& params, const EncoderCache<T>& cache, const Tensor<T>& grad_z,
                           EncoderParams<T>& grads) {
  if (params.index() != cache.index()) throw UsageError("encoder_backward: cache from a different architecture");
  if (grads.index() != params.index()) grads = params;
  if (const auto* p = std::get_if<EEGProjectParams<T>>(&params))
    return eegproject_backward(*p, std::get<EEGProjectCache<T>>(cache), grad_z, std::get<EEGProjectParams<T>>(grads));
  return tsconv_backward(std::get<TSConvParams<T>>(params), std::get<TSConvCache<T>>(cache), grad_z,
                         std::get<TSConvParams<T>>(grads));
}

template <class T, class F>
void visit_params(EncoderParams<T>& params, F&& f) {
  std::visit([&](auto& p) { p.visit(f); }, params);
}

// --- Initialization ---------------------------------------------------------
// Weights ~ Normal(0, 2/(fan_in+fan_out)), biases 0, gamma 1, beta 0.

inline double glorot_std(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
}

template <class T>
ResidualHeadParams<T> init_residual_head(std::size_t in_features, std::size_t width, Rng& rng) {
  ResidualHeadParams<T> h;
  h.w_in = rng_normal<T>({in_features, width}, rng, glorot_std(in_features, width));
  h.b_in = Tensor<T>({width});
  h.w_res = rng_normal<T>({width, width}, rng, glorot_std(width, width));
  h.b_res = Tensor<T>({width});
  h.gamma = Tensor<T>({width}, T(1));
  h.beta = Tensor<T>({width});
  return h;
}

template <class T>
EncoderParams<T> init_params(const EncoderDims& d, Rng& rng) {
  if (d.channels == 0 || d.times == 0 || d.dim < 2) throw UsageError("init_params: invalid encoder dimensions");
  if (!(d.dropout_p >= 0.0 && d.dropout_p < 1.0)) throw UsageError("init_params: dropout must lie in [0, 1)");
  if (d.arch == Arch::eegproject) {
    EEGProjectParams<T> p;
    p.channels = d.channels;
    p.times = d.times;
    p.dropout_p = d.dropout_p;
    p.head = init_residual_head<T>(d.channels * d.times, d.dim, rng);
    return p;
  }
  const std::size_t features = tsconv_features(d);
  TSConvParams<T> p;
  p.dims = d;
  const std::size_t kt = d.temporal_kernel;
  p.k_temporal = rng_normal<T>({d.filters, 1, 1, kt}, rng, glorot_std(kt, d.filters * kt));
  p.b_temporal = Tensor<T>({d.filters});
  p.k_spatial =
      rng_normal<T>({d.filters, d.filters, d.channels, 1}, rng, glorot_std(d.filters * d.channels, d.filters * d.channels));
  p.b_spatial = Tensor<T>({d.filters});
  p.head = init_residual_head<T>(features, d.dim, rng);
  return p;
}

template <class T>
EncoderDims encoder_dims(const EncoderParams<T>& params) {
  if (const auto* p = std::get_if<EEGProjectParams<T>>(&params)) {
    EncoderDims d;
    d.arch = Arch::eegproject;
    d.channels = p->channels;
    d.times = p->times;
    d.dim = p->head.width();
    d.dropout_p = p->dropout_p;
    return d;
  }
  return std::get<TSConvParams<T>>(params).dims;
}

}  // namespace stratalign
