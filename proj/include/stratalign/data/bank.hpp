// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <unordered_set>
#include <vector>

#include "stratalign/core/tensor.hpp"
#include "stratalign/data/neb1.hpp"

namespace stratalign {

/// (ℓ−1)/(L−1): 0 at the first layer, 1 at the last.
inline double relative_depth(int layer, int num_layers) {
  if (num_layers < 2) throw UsageError("relative_depth: need at least two layers, got " + std::to_string(num_layers));
  if (layer < 1 || layer > num_layers)
    throw UsageError("relative_depth: layer " + std::to_string(layer) + " outside [1, " + std::to_string(num_layers) + "]");
  return static_cast<double>(layer - 1) / static_cast<double>(num_layers - 1);
}

/// Pooled visual embeddings of one backbone layer, one row per image.
struct EmbeddingBank {
  std::string backbone_name;
  int layer_index = 1;
  int num_layers = 2;
  std::string pooling_tag = "mean";
  double relative_depth = 0.0;
  std::vector<std::string> item_ids;
  Tensor<float> matrix;  // [count x dim]
  /// Header keys this reader does not interpret; carried through unchanged.
  nlohmann::json extra = nlohmann::json::object();

  std::size_t count() const { return item_ids.size(); }
  std::size_t dim() const { return matrix.rank() == 2 ? matrix.dim(1) : 0; }
  bool is_final() const { return layer_index == num_layers; }

  void validate() const {
    if (backbone_name.empty()) throw DataError(DataErrorCode::invalid, "bank has no backbone_name");
    const double expected = stratalign::relative_depth(layer_index, num_layers);
    if (relative_depth != expected)
      throw DataError(DataErrorCode::invalid, "bank relative_depth " + std::to_string(relative_depth) +
                                                  " disagrees with (l-1)/(L-1) = " + std::to_string(expected));
    if (matrix.rank() != 2 || matrix.dim(0) != item_ids.size())
      throw DataError(DataErrorCode::invalid, "bank matrix rows do not match item_ids");
    std::unordered_set<std::string> seen;
    for (const auto& id : item_ids)
      if (!seen.insert(id).second) throw DataError(DataErrorCode::invalid, "duplicate item id '" + id + "' in bank");
  }
};

/// Builds a bank with relative_depth filled in from the layer metadata.
inline EmbeddingBank make_bank(std::string backbone, int layer, int num_layers, std::string pooling,
                               std::vector<std::string> ids, Tensor<float> matrix) {
  EmbeddingBank b;
  b.backbone_name = std::move(backbone);
  b.layer_index = layer;
  b.num_layers = num_layers;
  b.pooling_tag = std::move(pooling);
  b.relative_depth = relative_depth(layer, num_layers);
  b.item_ids = std::move(ids);
  b.matrix = std::move(matrix);
  b.validate();
  return b;
}

namespace detail {

inline std::size_t declared_payload(const nlohmann::json& h) {
  if (!h.contains("count") || !h.contains("dim") || !h["count"].is_number_unsigned() || !h["dim"].is_number_unsigned())
    throw DataError(DataErrorCode::invalid, "header lacks unsigned 'count'/'dim'");
  if (h.value("dtype", std::string()) != "f32") throw DataError(DataErrorCode::invalid, "unsupported dtype");
  return h["count"].get<std::size_t>() * h["dim"].get<std::size_t>();
}

}  // namespace detail

inline std::string encode_bank(const EmbeddingBank& bank) {
  bank.validate();
  neb1::Container c;
  c.header = bank.extra;
  c.header["kind"] = "embedding";
  c.header["backbone_name"] = bank.backbone_name;
  c.header["layer_index"] = bank.layer_index;
  c.header["num_layers"] = bank.num_layers;
  c.header["pooling_tag"] = bank.pooling_tag;
  c.header["relative_depth"] = bank.relative_depth;
  c.header["dim"] = bank.dim();
  c.header["count"] = bank.count();
  c.header["dtype"] = "f32";
  c.header["item_ids"] = bank.item_ids;
  c.payload = bank.matrix.storage();
  return neb1::encode(neb1::kBankMagic, c);
}

inline EmbeddingBank decode_bank(std::string_view bytes) {
  neb1::Container c = neb1::decode(neb1::kBankMagic, bytes, detail::declared_payload);
  auto& h = c.header;
  EmbeddingBank bank;
  try {
    if (h.value("kind", std::string("embedding")) != "embedding")
      throw DataError(DataErrorCode::invalid, "file holds a '" + h["kind"].get<std::string>() + "' array, not a bank");
    bank.backbone_name = h.at("backbone_name").get<std::string>();
    bank.layer_index = h.at("layer_index").get<int>();
    bank.num_layers = h.at("num_layers").get<int>();
    bank.pooling_tag = h.at("pooling_tag").get<std::string>();
    bank.item_ids = h.at("item_ids").get<std::vector<std::string>>();
    const auto count = h.at("count").get<std::size_t>();
    const auto dim = h.at("dim").get<std::size_t>();
    if (bank.item_ids.size() != count)
      throw DataError(DataErrorCode::invalid, "item_ids length disagrees with header count");
    const double recomputed = relative_depth(bank.layer_index, bank.num_layers);
    bank.relative_depth = h.value("relative_depth", recomputed);
    bank.matrix = Tensor<float>({count, dim}, std::move(c.payload));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataErrorCode::invalid, std::string("malformed bank header: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(DataErrorCode::invalid, e.what());
  }
  for (const char* key : {"kind", "backbone_name", "layer_index", "num_layers", "pooling_tag", "relative_depth", "dim",
                          "count", "dtype", "item_ids"})
    h.erase(key);
  bank.extra = std::move(h);
  bank.validate();
  return bank;
}

inline void write_bank(const EmbeddingBank& bank, const std::filesystem::path& path) {
  neb1::write_file(path, encode_bank(bank));
}

inline EmbeddingBank read_bank(const std::filesystem::path& path) { return decode_bank(neb1::read_file(path)); }

}  // namespace stratalign
