// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <thread>
#include <vector>

#include "stratalign/align/trainer.hpp"
#include "stratalign/data/manifest.hpp"
#include "stratalign/eval/retrieval.hpp"

namespace stratalign {

/// Trial-averaged train and test neural data for one subject, with the
/// config's channel selection and z-scoring applied.
struct PreparedSplits {
  NeuralDataset train;
  NeuralDataset test;
  std::vector<std::string> test_categories;  // per test row
  std::vector<std::string> test_concepts;    // per test row
};

inline PreparedSplits prepare_splits(const PairManifest& manifest, const std::string& subject, const TrainConfig& cfg) {
  const NeuralSource& src = manifest.source(subject);
  NeuralDataset raw = read_neural(manifest.resolve(src.path));
  if (!cfg.channels.empty()) raw = select_channels(raw, cfg.channels);
  auto prepare = [&](const std::string& split) {
    const std::vector<std::string> ids = manifest.image_ids(split);
    if (ids.empty()) throw DataError(DataErrorCode::missing, "manifest has no '" + split + "' images");
    NeuralDataset d = average_repetitions(raw, &ids);
    if (cfg.zscore) d.trials = zscore_channels(d.trials);
    return d;
  };
  PreparedSplits out;
  out.train = prepare("train");
  out.test = prepare("test");
  const auto categories = manifest.image_categories();
  const auto concepts = manifest.image_concepts();
  for (const auto& id : out.test.image_ids) {
    out.test_categories.push_back(categories.at(id));
    out.test_concepts.push_back(concepts.at(id));
  }
  return out;
}

/// Zero-shot retrieval over the paired test set: query i is neural row i,
/// its ground truth is image row i, and every test image is a candidate.
inline RetrievalReport evaluate(const Model<float>& model, const PairedSet& test,
                                const std::vector<std::string>& categories) {
  std::vector<std::size_t> truth(test.size());
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = i;
  return score_retrieval(embed_neural(model, test.neural), embed_images(model, test.targets), truth, categories);
}

struct SweepResult {
  std::vector<RetrievalReport> reports;  // ascending layer index
  int best_layer = 0;
  double best_top1 = 0.0;
  int final_layer = 0;
  double final_top1 = 0.0;
  double delta = 0.0;  // best_top1 - final_top1
};

/// Best = highest Top-1 (lower layer on ties); final = the layer with
/// relative depth 1, else the deepest probed layer.
inline SweepResult summarize_sweep(std::vector<RetrievalReport> reports) {
  if (reports.empty()) throw UsageError("sweep: no layer reports");
  std::sort(reports.begin(), reports.end(),
            [](const RetrievalReport& a, const RetrievalReport& b) { return a.layer_index < b.layer_index; });
  SweepResult r;
  r.reports = std::move(reports);
  const RetrievalReport* best = &r.reports.front();
  for (const auto& rep : r.reports)
    if (rep.top1 > best->top1) best = &rep;
  r.best_layer = best->layer_index;
  r.best_top1 = best->top1;
  r.final_layer = r.reports.back().layer_index;
  r.final_top1 = r.reports.back().top1;
  r.delta = r.best_top1 - r.final_top1;
  return r;
}

inline nlohmann::json to_json(const SweepResult& s) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& r : s.reports) layers.push_back(to_json(r));
  return {{"kind", "sweep"},
          {"layers", layers},
          {"summary",
           {{"best_layer", s.best_layer},
            {"best_top1", s.best_top1},
            {"final_layer", s.final_layer},
            {"final_top1", s.final_top1},
            {"delta", s.delta}}}};
}

inline SweepResult sweep_from_json(const nlohmann::json& j) {
  std::vector<RetrievalReport> reports;
  for (const auto& r : j.at("layers")) reports.push_back(report_from_json(r));
  return summarize_sweep(std::move(reports));
}

/// Worker count for layer_sweep: STRATALIGN_THREADS if set, else 1.
inline std::size_t sweep_threads() {
  const char* env = std::getenv("STRATALIGN_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw UsageError("STRATALIGN_THREADS must be a positive integer");
  return static_cast<std::size_t>(n);
}

/// Fits and evaluates one model per bank, each from its own config-seeded
/// init, and assembles the per-layer reports.
inline SweepResult layer_sweep(const PreparedSplits& data, const std::vector<EmbeddingBank>& banks, const TrainConfig& cfg,
                               std::size_t threads = 1) {
  if (banks.empty()) throw UsageError("layer_sweep: no banks");
  for (const auto& b : banks)
    if (b.backbone_name != banks.front().backbone_name || b.num_layers != banks.front().num_layers)
      throw DataError(DataErrorCode::invalid, "layer_sweep: banks come from different backbones");
  std::vector<RetrievalReport> reports(banks.size());
  auto run_one = [&](std::size_t i) {
    const EmbeddingBank& bank = banks[i];
    const PairedSet train = pair_with_bank(data.train, bank);
    const PairedSet test = pair_with_bank(data.test, bank);
    const FitResult fitted = fit(train, nullptr, cfg);
    RetrievalReport r = evaluate(fitted.checkpoint.model, test, data.test_categories);
    r.subject_id = data.test.subject_id;
    r.backbone = bank.backbone_name;
    r.layer_index = bank.layer_index;
    r.relative_depth = bank.relative_depth;
    reports[i] = r;
  };
  threads = std::clamp<std::size_t>(threads, 1, banks.size());
  if (threads == 1) {
    for (std::size_t i = 0; i < banks.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < banks.size(); i = next++) {
          try {
            run_one(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    pool.clear();
    if (failure) std::rethrow_exception(failure);
  }
  return summarize_sweep(std::move(reports));
}

}  // namespace stratalign
