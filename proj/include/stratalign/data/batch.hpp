// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <numeric>
#include <optional>
#include <unordered_map>

#include "stratalign/core/rng.hpp"
#include "stratalign/data/bank.hpp"
#include "stratalign/data/neural.hpp"

namespace stratalign {

/// Neural rows and their visual targets, aligned row by row.
struct PairedSet {
  Tensor<float> neural;   // [n x C x T]
  Tensor<float> targets;  // [n x D_l]
  std::vector<std::string> ids;

  std::size_t size() const { return ids.size(); }
};

/// Pairs every dataset row with the bank row of the same image id.
inline PairedSet pair_with_bank(const NeuralDataset& dataset, const EmbeddingBank& bank) {
  std::unordered_map<std::string, std::size_t> bank_row;
  for (std::size_t i = 0; i < bank.item_ids.size(); ++i) bank_row.emplace(bank.item_ids[i], i);
  std::vector<std::size_t> rows;
  rows.reserve(dataset.size());
  for (const auto& id : dataset.image_ids) {
    auto it = bank_row.find(id);
    if (it == bank_row.end())
      throw DataError(DataErrorCode::missing, "image '" + id + "' is in the neural dataset but not in bank '" +
                                                  bank.backbone_name + "' layer " + std::to_string(bank.layer_index));
    rows.push_back(it->second);
  }
  return PairedSet{dataset.trials, gather_rows(bank.matrix, rows), dataset.image_ids};
}

struct Batch {
  Tensor<float> neural;
  Tensor<float> targets;
  std::vector<std::string> ids;
};

/// Epoch-wise batching. Every pair is visited once per epoch; the final short
/// batch is kept.
class BatchIterator {
 public:
  BatchIterator(PairedSet pairs, std::size_t batch_size, bool shuffle)
      : pairs_(std::move(pairs)), batch_size_(batch_size), shuffle_(shuffle) {
    if (batch_size_ == 0) throw UsageError("batch size must be positive");
    order_.resize(pairs_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
  }

  BatchIterator(const NeuralDataset& dataset, const EmbeddingBank& bank, std::size_t batch_size, bool shuffle)
      : BatchIterator(pair_with_bank(dataset, bank), batch_size, shuffle) {}

  /// Resets the cursor; with shuffling on, draws a fresh permutation from rng.
  void start_epoch(Rng& rng) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (shuffle_) rng.shuffle(order_);
    cursor_ = 0;
  }

  std::optional<Batch> next() {
    if (cursor_ >= order_.size()) return std::nullopt;
    const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
    std::span<const std::size_t> rows(order_.data() + cursor_, end - cursor_);
    cursor_ = end;
    Batch b{gather_rows(pairs_.neural, rows), gather_rows(pairs_.targets, rows), {}};
    b.ids.reserve(rows.size());
    for (auto r : rows) b.ids.push_back(pairs_.ids[r]);
    return b;
  }

  std::size_t num_batches() const { return (order_.size() + batch_size_ - 1) / batch_size_; }
  const PairedSet& pairs() const { return pairs_; }

 private:
  PairedSet pairs_;
  std::size_t batch_size_;
  bool shuffle_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace stratalign
