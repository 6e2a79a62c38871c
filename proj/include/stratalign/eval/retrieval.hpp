// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stratalign/core/ops.hpp"

namespace stratalign {

using Rankings = std::vector<std::vector<std::size_t>>;

/// For each query row, the k candidate indices with the highest cosine
/// similarity, best first. Equal similarities rank the lower index first.
template <class T>
Rankings retrieve_topk(const Tensor<T>& queries, const Tensor<T>& candidates, std::size_t k) {
  if (queries.rank() != 2 || candidates.rank() != 2 || queries.dim(1) != candidates.dim(1))
    throw ShapeError("retrieve_topk: queries " + shape_str(queries.shape()) + " vs candidates " +
                     shape_str(candidates.shape()));
  const std::size_t n = candidates.rows();
  if (k > n) throw UsageError("retrieve_topk: k=" + std::to_string(k) + " exceeds " + std::to_string(n) + " candidates");
  const Tensor<T> q = l2_normalize(queries);
  const Tensor<T> c = l2_normalize(candidates);
  Rankings out(q.rows());
  // Per-pair fixed-order dot products: identical candidates score identically
  // wherever they sit, so exact ties really resolve to the lowest index.
  std::vector<T> sims(n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < q.rows(); ++i) {
    for (std::size_t j = 0; j < n; ++j) sims[j] = dot<T>(q.row(i), c.row(j));
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto better = [&](std::size_t a, std::size_t b) { return sims[a] > sims[b] || (sims[a] == sims[b] && a < b); };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
    out[i].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

/// Fraction of queries whose ground-truth candidate is among the first k.
inline double topk_accuracy(const Rankings& rankings, const std::vector<std::size_t>& ground_truth, std::size_t k) {
  if (rankings.size() != ground_truth.size()) throw ShapeError("topk_accuracy: one ground truth per query required");
  if (rankings.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    const auto& r = rankings[i];
    const auto end = r.begin() + static_cast<std::ptrdiff_t>(std::min(k, r.size()));
    hits += std::find(r.begin(), end, ground_truth[i]) != end;
  }
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

/// Share of top-5 retrievals whose category equals the query's category,
/// never counting the ground-truth image itself, normalized by 5M.
/// The query's category is the category of its ground-truth candidate.
inline double concept_accuracy(const Rankings& rankings, const std::vector<std::string>& candidate_categories,
                               const std::vector<std::size_t>& ground_truth) {
  constexpr std::size_t kDepth = 5;
  if (rankings.size() != ground_truth.size()) throw ShapeError("concept_accuracy: one ground truth per query required");
  if (rankings.empty()) return 0.0;
  std::size_t matches = 0;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    if (rankings[i].size() < kDepth) throw UsageError("concept_accuracy: needs top-5 rankings");
    if (ground_truth[i] >= candidate_categories.size() || candidate_categories[ground_truth[i]].empty())
      throw DataError(DataErrorCode::missing, "concept_accuracy: no category for ground-truth candidate");
    const std::string& want = candidate_categories[ground_truth[i]];
    for (std::size_t r = 0; r < kDepth; ++r) {
      const std::size_t j = rankings[i][r];
      if (j >= candidate_categories.size() || candidate_categories[j].empty())
        throw DataError(DataErrorCode::missing, "concept_accuracy: no category for candidate " + std::to_string(j));
      if (j != ground_truth[i] && candidate_categories[j] == want) ++matches;
    }
  }
  return static_cast<double>(matches) / static_cast<double>(kDepth * rankings.size());
}

struct RetrievalReport {
  std::string subject_id;
  std::string backbone;
  int layer_index = 0;
  double relative_depth = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
  double concept_accuracy = 0.0;
  std::size_t num_queries = 0;
};

inline nlohmann::json to_json(const RetrievalReport& r) {
  return {{"subject_id", r.subject_id},         {"backbone", r.backbone}, {"layer_index", r.layer_index},
          {"relative_depth", r.relative_depth}, {"top1", r.top1},         {"top5", r.top5},
          {"concept_accuracy", r.concept_accuracy}, {"num_queries", r.num_queries}};
}

inline RetrievalReport report_from_json(const nlohmann::json& j) {
  RetrievalReport r;
  r.subject_id = j.value("subject_id", std::string());
  r.backbone = j.value("backbone", std::string());
  r.layer_index = j.at("layer_index").get<int>();
  r.relative_depth = j.value("relative_depth", 0.0);
  r.top1 = j.at("top1").get<double>();
  r.top5 = j.value("top5", r.top1);
  r.concept_accuracy = j.value("concept_accuracy", 0.0);
  r.num_queries = j.value("num_queries", std::size_t{0});
  return r;
}

/// Zero-shot retrieval of candidate images from neural queries. Query i's
/// ground truth is candidate ground_truth[i].
template <class T>
RetrievalReport score_retrieval(const Tensor<T>& queries, const Tensor<T>& candidates,
                                const std::vector<std::size_t>& ground_truth,
                                const std::vector<std::string>& candidate_categories) {
  const std::size_t depth = std::min<std::size_t>(5, candidates.rows());
  const Rankings ranks = retrieve_topk(queries, candidates, depth);
  RetrievalReport r;
  r.num_queries = queries.rows();
  r.top1 = topk_accuracy(ranks, ground_truth, 1);
  r.top5 = topk_accuracy(ranks, ground_truth, 5);
  r.concept_accuracy = depth == 5 ? concept_accuracy(ranks, candidate_categories, ground_truth) : 0.0;
  return r;
}

}  // namespace stratalign
