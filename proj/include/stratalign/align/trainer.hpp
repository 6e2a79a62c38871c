// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <vector>

#include "stratalign/align/checkpoint.hpp"
#include "stratalign/align/contrastive.hpp"
#include "stratalign/data/batch.hpp"

namespace stratalign {

/// Forward through encoder, projectors and loss, then the full backward pass.
/// Gradients land in `grads` (laid out like `model`); returns the loss.
template <class T>
T loss_and_gradients(const Model<T>& model, const Tensor<T>& neural, const Tensor<T>& targets, Mode mode, Rng* rng,
                     Model<T>& grads) {
  EncoderCache<T> cache;
  const Tensor<T> z_neural = encoder_forward(model.encoder, neural, mode, rng, cache);
  const Projection<T> proj = project(model.projector, z_neural, targets);
  const T tau = static_cast<T>(model.temperature());
  const ContrastiveResult<T> loss = contrastive_loss(proj.v, proj.w, tau);
  ProjectorBackward<T> pb = project_backward(model.projector, z_neural, targets, loss.grad_v, loss.grad_w);
  grads.projector = std::move(pb.grads);
  encoder_backward(model.encoder, cache, pb.neural, grads.encoder);
  grads.logit_scale = Tensor<T>({1});
  grads.logit_scale[0] = loss.grad_temperature * -tau;  // τ = exp(−s)
  return loss.loss;
}

/// Projected neural embeddings v, dropout off.
template <class T>
Tensor<T> embed_neural(const Model<T>& model, const Tensor<T>& neural) {
  return project_neural(model.projector, encoder_forward(model.encoder, neural, Mode::eval, nullptr));
}

/// Projected visual embeddings w.
template <class T>
Tensor<T> embed_images(const Model<T>& model, const Tensor<T>& targets) {
  return project_image(model.projector, targets);
}

/// Eval-mode loss over consecutive chunks of `batch_size` pairs, weighted by
/// chunk size (the same averaging as the logged train loss).
template <class T>
double evaluation_loss(const Model<T>& model, const Tensor<T>& neural, const Tensor<T>& targets, std::size_t batch_size) {
  const std::size_t n = neural.dim(0);
  if (n == 0 || batch_size == 0) throw UsageError("evaluation_loss: empty set or zero batch size");
  const T tau = static_cast<T>(model.temperature());
  double total = 0.0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t count = std::min(batch_size, n - start);
    rows.resize(count);
    for (std::size_t i = 0; i < count; ++i) rows[i] = start + i;
    const Tensor<T> v = embed_neural(model, gather_rows(neural, rows));
    const Tensor<T> w = embed_images(model, gather_rows(targets, rows));
    total += static_cast<double>(contrastive_loss(v, w, tau, false).loss) * static_cast<double>(count);
  }
  return total / static_cast<double>(n);
}

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> test_loss;
  double temperature = 0.0;
  std::uint64_t steps = 0;  // cumulative optimizer steps
};

inline nlohmann::json to_json(const EpochLog& e) {
  nlohmann::json j = {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"temperature", e.temperature}, {"steps", e.steps}};
  j["test_loss"] = e.test_loss ? nlohmann::json(*e.test_loss) : nlohmann::json(nullptr);
  return j;
}

struct FitCallbacks {
  std::function<void(const EpochLog&, const Model<float>&)> on_epoch;
};

struct FitResult {
  ModelCheckpoint checkpoint;
  std::vector<EpochLog> history;
};

namespace detail {
enum FitStream : std::uint64_t { kInitStream = 1, kTrainStream = 2 };
}

/// Trains encoder + projectors + temperature with AdamW on `train`; after
/// every epoch records the mean train loss and, if `test` is given, the
/// held-out loss in eval mode. Deterministic for a fixed config seed.
/// With `resume`, continues from its epoch, parameters, moments and RNG.
inline FitResult fit(const PairedSet& train, const PairedSet* test, const TrainConfig& cfg, const FitCallbacks& callbacks = {},
                     const ModelCheckpoint* resume = nullptr) {
  cfg.validate();
  if (train.size() == 0) throw UsageError("fit: empty training set");
  if (train.neural.rank() != 3) throw ShapeError("fit: neural data must be n x C x T");
  FitResult result;
  ModelCheckpoint& ck = result.checkpoint;
  ck.config = cfg;
  Rng rng = Rng::derive(cfg.seed, detail::kTrainStream);
  if (resume) {
    ck.model = resume->model;
    ck.optimizer = resume->optimizer;
    ck.epoch = resume->epoch;
    ck.data = resume->data;
    rng.restore(resume->rng_state);
  } else {
    Rng init_rng = Rng::derive(cfg.seed, detail::kInitStream);
    ck.model = init_model<float>(cfg, train.neural.dim(1), train.neural.dim(2), train.targets.dim(1), init_rng);
  }
  Model<float>& model = ck.model;
  Model<float> grads = zeros_like(model);
  BatchIterator batches(train, cfg.batch_size, /*shuffle=*/true);
  const float max_scale = static_cast<float>(cfg.max_logit_scale());

  for (std::size_t epoch = ck.epoch; epoch < cfg.epochs; ++epoch) {
    batches.start_epoch(rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    while (auto batch = batches.next()) {
      const float loss = loss_and_gradients(model, batch->neural, batch->targets, Mode::train, &rng, grads);
      if (!std::isfinite(loss))
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch + 1) + ", step " +
                           std::to_string(ck.optimizer.step + 1));
      loss_sum += static_cast<double>(loss) * static_cast<double>(batch->ids.size());
      seen += batch->ids.size();
      auto params = model.parameters();
      auto grad_refs = grads.parameters();
      std::vector<const Tensor<float>*> grad_ptrs;
      grad_ptrs.reserve(grad_refs.size());
      for (const auto& g : grad_refs) grad_ptrs.push_back(g.value);
      adamw_step<float>(params, grad_ptrs, ck.optimizer, cfg.learning_rate, cfg.weight_decay);
      model.logit_scale[0] = std::min(model.logit_scale[0], max_scale);
      model.bump_version();
      for (const auto& p : params)
        if (!p.value->all_finite()) throw NumericError("non-finite parameter '" + p.name + "' after update");
    }
    ck.epoch = epoch + 1;
    EpochLog log;
    log.epoch = ck.epoch;
    log.train_loss = loss_sum / static_cast<double>(seen);
    log.temperature = model.temperature();
    log.steps = ck.optimizer.step;
    if (test && cfg.log_test_loss && test->size() > 0)
      log.test_loss = evaluation_loss(model, test->neural, test->targets, cfg.batch_size);
    result.history.push_back(log);
    if (callbacks.on_epoch) callbacks.on_epoch(log, model);
  }
  ck.rng_state = rng.state();
  return result;
}

}  // namespace stratalign
