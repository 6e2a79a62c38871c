// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "stratalign/align/adamw.hpp"
#include "stratalign/align/config.hpp"
#include "stratalign/align/projector.hpp"
#include "stratalign/encoders/encoders.hpp"

namespace stratalign {

/// Everything trainable: encoder, both projectors and the log inverse
/// temperature s, with τ = exp(−s).
template <class T>
struct Model {
  EncoderParams<T> encoder;
  ProjectorParams<T> projector;
  Tensor<T> logit_scale = Tensor<T>({1});

  double temperature() const { return std::exp(-static_cast<double>(logit_scale[0])); }

  /// Fixed order: encoder tensors, projector tensors, logit scale.
  std::vector<ParamRef<T>> parameters() {
    std::vector<ParamRef<T>> out;
    auto collect = [&](const char* name, Tensor<T>& t, bool decay) { out.push_back({name, &t, decay}); };
    visit_params(encoder, collect);
    projector.visit(collect);
    out.push_back({"logit_scale", &logit_scale, false});
    return out;
  }

  void bump_version() {
    std::visit([](auto& p) { ++p.version; }, encoder);
  }

  template <class U>
  Model<U> cast() const {
    Model<U> out;
    if (const auto* p = std::get_if<EEGProjectParams<T>>(&encoder)) {
      EEGProjectParams<U> q;
      q.channels = p->channels;
      q.times = p->times;
      q.dropout_p = p->dropout_p;
      out.encoder = q;
    } else {
      TSConvParams<U> q;
      q.dims = std::get<TSConvParams<T>>(encoder).dims;
      out.encoder = q;
    }
    out.projector.mode = projector.mode;
    Model copy = *this;
    auto src = copy.parameters();
    auto dst = out.parameters();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].value = src[i].value->template cast<U>();
    return out;
  }
};

template <class T>
Model<T> init_model(const TrainConfig& cfg, std::size_t channels, std::size_t times, std::size_t image_dim, Rng& rng) {
  cfg.validate();
  EncoderDims dims;
  dims.arch = cfg.arch;
  dims.channels = channels;
  dims.times = times;
  dims.dim = cfg.encoder_dim;
  dims.dropout_p = cfg.dropout_p;
  dims.filters = cfg.tsconv_filters;
  Model<T> m;
  m.encoder = init_params<T>(dims, rng);
  m.projector = init_projector<T>(cfg.projector, cfg.encoder_dim, image_dim, cfg.shared_dim, rng);
  m.logit_scale[0] = static_cast<T>(std::log(1.0 / cfg.init_temperature));
  return m;
}

/// A zero-filled model with the same layout as `m`, used as a gradient buffer.
template <class T>
Model<T> zeros_like(Model<T>& m) {
  Model<T> g = m;
  for (auto& p : g.parameters()) p.value->fill(T(0));
  return g;
}

}  // namespace stratalign
