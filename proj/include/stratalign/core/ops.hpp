// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <numbers>

#include "stratalign/core/rng.hpp"
#include "stratalign/core/tensor.hpp"

namespace stratalign {

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// GELU, exact form x·Φ(x) with Φ from erfc (keeps the negative tail accurate).

template <class T>
T normal_cdf(T x) {
  return T(0.5) * std::erfc(-x / std::numbers::sqrt2_v<T>);
}

template <class T>
T normal_pdf(T x) {
  return std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
}

template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * normal_cdf(x[i]);
  return out;
}

template <class T>
Tensor<T> gelu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  if (x.shape() != grad_out.shape()) throw ShapeError("gelu_backward: gradient shape mismatch");
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = grad_out[i] * (normal_cdf(x[i]) + x[i] * normal_pdf(x[i]));
  return out;
}

// ---------------------------------------------------------------------------
// LayerNorm over the last axis with population variance.

inline constexpr double kLayerNormEps = 1e-5;

template <class T>
struct LayerNormCache {
  Tensor<T> normalized;  // x̂, same shape as input
  std::vector<T> inv_std;
};

template <class T>
struct LayerNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps,
                     LayerNormCache<T>* cache = nullptr) {
  const std::size_t d = x.empty() ? 0 : x.shape().back();
  if (d < 2) throw ShapeError("layer_norm: feature width must be at least 2");
  if (gamma.size() != d || beta.size() != d) throw ShapeError("layer_norm: gamma/beta length mismatch");
  if (!(eps > T(0))) throw UsageError("layer_norm: eps must be positive");
  const std::size_t rows = x.size() / d;
  Tensor<T> out(x.shape());
  if (cache) {
    cache->normalized = Tensor<T>(x.shape());
    cache->inv_std.assign(rows, T(0));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data().data() + r * d;
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += in[j];
    mean /= T(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= T(d);
    const T inv_std = T(1) / std::sqrt(var + eps);
    T* o = out.data().data() + r * d;
    for (std::size_t j = 0; j < d; ++j) {
      const T xhat = (in[j] - mean) * inv_std;
      if (cache) cache->normalized[r * d + j] = xhat;
      o[j] = gamma[j] * xhat + beta[j];
    }
    if (cache) cache->inv_std[r] = inv_std;
  }
  ensure_finite(out, "layer_norm");
  return out;
}

template <class T>
LayerNormGrads<T> layer_norm_backward(const LayerNormCache<T>& cache, const Tensor<T>& gamma,
                                      const Tensor<T>& grad_out) {
  const Tensor<T>& xhat = cache.normalized;
  if (xhat.shape() != grad_out.shape()) throw ShapeError("layer_norm_backward: gradient shape mismatch");
  const std::size_t d = xhat.shape().back();
  const std::size_t rows = xhat.size() / d;
  LayerNormGrads<T> g{Tensor<T>(xhat.shape()), Tensor<T>({d}), Tensor<T>({d})};
  std::vector<T> dxhat(d);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* dy = grad_out.data().data() + r * d;
    const T* xh = xhat.data().data() + r * d;
    T sum_dxhat = 0, sum_dxhat_xhat = 0;
    for (std::size_t j = 0; j < d; ++j) {
      g.gamma[j] += dy[j] * xh[j];
      g.beta[j] += dy[j];
      dxhat[j] = dy[j] * gamma[j];
      sum_dxhat += dxhat[j];
      sum_dxhat_xhat += dxhat[j] * xh[j];
    }
    const T k = cache.inv_std[r] / T(d);
    T* dx = g.input.data().data() + r * d;
    for (std::size_t j = 0; j < d; ++j) dx[j] = k * (T(d) * dxhat[j] - sum_dxhat - xh[j] * sum_dxhat_xhat);
  }
  return g;
}

// ---------------------------------------------------------------------------
// 2-D cross-correlation, valid padding, stride 1. NCHW layout.

template <class T>
struct Conv2dGrads {
  Tensor<T> input;
  Tensor<T> kernel;
  Tensor<T> bias;
};

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias) {
  require_rank(x, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != cin) throw ShapeError("conv2d: kernel input channels mismatch");
  if (kh > h || kw > w || kh == 0 || kw == 0) throw ShapeError("conv2d: kernel larger than input");
  if (bias.size() != cout) throw ShapeError("conv2d: bias length mismatch");
  const std::size_t ho = h - kh + 1, wo = w - kw + 1;
  Tensor<T> y({n, cout, ho, wo});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t co = 0; co < cout; ++co) {
      T* out = y.data().data() + ((b * cout + co) * ho) * wo;
      for (std::size_t i = 0; i < ho * wo; ++i) out[i] = bias[co];
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const T* in = x.data().data() + ((b * cin + ci) * h) * w;
        const T* k = kernel.data().data() + ((co * cin + ci) * kh) * kw;
        for (std::size_t oh = 0; oh < ho; ++oh)
          for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j) {
              const T kv = k[i * kw + j];
              const T* src = in + (oh + i) * w + j;
              T* dst = out + oh * wo;
              for (std::size_t ow = 0; ow < wo; ++ow) dst[ow] += kv * src[ow];
            }
      }
    }
  ensure_finite(y, "conv2d");
  return y;
}

template <class T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& grad_out) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  const std::size_t ho = h - kh + 1, wo = w - kw + 1;
  if (grad_out.shape() != Shape{n, cout, ho, wo}) throw ShapeError("conv2d_backward: gradient shape mismatch");
  Conv2dGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(kernel.shape()), Tensor<T>({cout})};
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t co = 0; co < cout; ++co) {
      const T* dy = grad_out.data().data() + ((b * cout + co) * ho) * wo;
      T bias_acc = 0;
      for (std::size_t i = 0; i < ho * wo; ++i) bias_acc += dy[i];
      g.bias[co] += bias_acc;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const T* in = x.data().data() + ((b * cin + ci) * h) * w;
        T* din = g.input.data().data() + ((b * cin + ci) * h) * w;
        const T* k = kernel.data().data() + ((co * cin + ci) * kh) * kw;
        T* dk = g.kernel.data().data() + ((co * cin + ci) * kh) * kw;
        for (std::size_t oh = 0; oh < ho; ++oh)
          for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j) {
              const T kv = k[i * kw + j];
              const T* src = in + (oh + i) * w + j;
              T* dsrc = din + (oh + i) * w + j;
              const T* drow = dy + oh * wo;
              T acc = 0;
              for (std::size_t ow = 0; ow < wo; ++ow) {
                acc += drow[ow] * src[ow];
                dsrc[ow] += kv * drow[ow];
              }
              dk[i * kw + j] += acc;
            }
      }
    }
  return g;
}

// ---------------------------------------------------------------------------
// Average pooling over the two trailing axes; trailing partial windows dropped.

struct Pool2d {
  std::size_t window_h, window_w, stride_h, stride_w;
};

inline std::size_t pooled_length(std::size_t length, std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0) throw UsageError("pool: window and stride must be positive");
  if (window > length) throw ShapeError("pool: window larger than input");
  return (length - window) / stride + 1;
}

template <class T>
Tensor<T> avgpool2d(const Tensor<T>& x, const Pool2d& pool) {
  require_rank(x, 4, "avgpool2d");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = pooled_length(h, pool.window_h, pool.stride_h);
  const std::size_t wo = pooled_length(w, pool.window_w, pool.stride_w);
  const T inv = T(1) / T(pool.window_h * pool.window_w);
  Tensor<T> y({x.dim(0), x.dim(1), ho, wo});
  for (std::size_t p = 0; p < planes; ++p) {
    const T* in = x.data().data() + p * h * w;
    T* out = y.data().data() + p * ho * wo;
    for (std::size_t oh = 0; oh < ho; ++oh)
      for (std::size_t ow = 0; ow < wo; ++ow) {
        T acc = 0;
        for (std::size_t i = 0; i < pool.window_h; ++i)
          for (std::size_t j = 0; j < pool.window_w; ++j)
            acc += in[(oh * pool.stride_h + i) * w + ow * pool.stride_w + j];
        out[oh * wo + ow] = acc * inv;
      }
  }
  return y;
}

template <class T>
Tensor<T> avgpool2d_backward(const Shape& input_shape, const Pool2d& pool, const Tensor<T>& grad_out) {
  const std::size_t planes = input_shape[0] * input_shape[1], h = input_shape[2], w = input_shape[3];
  const std::size_t ho = pooled_length(h, pool.window_h, pool.stride_h);
  const std::size_t wo = pooled_length(w, pool.window_w, pool.stride_w);
  if (grad_out.shape() != Shape{input_shape[0], input_shape[1], ho, wo})
    throw ShapeError("avgpool2d_backward: gradient shape mismatch");
  const T inv = T(1) / T(pool.window_h * pool.window_w);
  Tensor<T> dx(input_shape);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* dy = grad_out.data().data() + p * ho * wo;
    T* din = dx.data().data() + p * h * w;
    for (std::size_t oh = 0; oh < ho; ++oh)
      for (std::size_t ow = 0; ow < wo; ++ow) {
        const T g = dy[oh * wo + ow] * inv;
        for (std::size_t i = 0; i < pool.window_h; ++i)
          for (std::size_t j = 0; j < pool.window_w; ++j) din[(oh * pool.stride_h + i) * w + ow * pool.stride_w + j] += g;
      }
  }
  return dx;
}

// ---------------------------------------------------------------------------

template <class T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const std::size_t w = x.row_width();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto o = out.row(r);
    T mx = in.empty() ? T(0) : *std::max_element(in.begin(), in.end());
    T sum = 0;
    for (std::size_t j = 0; j < w; ++j) sum += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < w; ++j) o[j] /= sum;
  }
  ensure_finite(out, "softmax_rows");
  return out;
}

/// Each row scaled to unit L2 norm. Optional output receives the row norms.
template <class T>
Tensor<T> l2_normalize(const Tensor<T>& x, std::vector<T>* norms = nullptr) {
  Tensor<T> out(x.shape());
  if (norms) norms->assign(x.rows(), T(0));
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    const T norm = std::sqrt(dot<T>(in, in));
    if (!(norm > T(0))) throw NumericError("l2_normalize: zero-norm row " + std::to_string(r));
    auto o = out.row(r);
    for (std::size_t j = 0; j < in.size(); ++j) o[j] = in[j] / norm;
    if (norms) (*norms)[r] = norm;
  }
  ensure_finite(out, "l2_normalize");
  return out;
}

/// Gradient through row normalization: dx = (dy − ŷ(ŷ·dy)) / ‖x‖.
template <class T>
Tensor<T> l2_normalize_backward(const Tensor<T>& normalized, const std::vector<T>& norms, const Tensor<T>& grad_out) {
  Tensor<T> dx(normalized.shape());
  for (std::size_t r = 0; r < normalized.rows(); ++r) {
    auto y = normalized.row(r);
    auto dy = grad_out.row(r);
    const T proj = dot<T>(y, dy);
    auto o = dx.row(r);
    for (std::size_t j = 0; j < y.size(); ++j) o[j] = (dy[j] - y[j] * proj) / norms[r];
  }
  return dx;
}

/// Inverted-dropout mask: 0 with probability p, 1/(1−p) otherwise.
template <class T>
Tensor<T> dropout_mask(const Shape& shape, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw UsageError("dropout: p must lie in [0, 1)");
  Tensor<T> mask(shape, T(1));
  if (p == 0.0) return mask;
  const T keep_scale = T(1.0 / (1.0 - p));
  for (auto& m : mask.data()) m = rng.uniform() < p ? T(0) : keep_scale;
  return mask;
}

template <class T>
Tensor<T> rng_normal(const Shape& shape, Rng& rng, double stddev = 1.0) {
  Tensor<T> out(shape);
  for (auto& v : out.data()) v = static_cast<T>(rng.normal() * stddev);
  return out;
}

template <class T>
Tensor<T> multiply(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("multiply: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

}  // namespace stratalign
