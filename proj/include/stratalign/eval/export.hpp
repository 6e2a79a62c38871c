// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "stratalign/align/trainer.hpp"

namespace stratalign {

/// CSV rows: modality (neural|image), image_id, concept_id, e0..e{d-1}.
/// All neural rows come first, then the image rows in the same order.
inline std::string embeddings_csv(const Model<float>& model, const PairedSet& pairs,
                                  const std::vector<std::string>& concept_ids) {
  if (concept_ids.size() != pairs.size()) throw ShapeError("export: one concept id per pair required");
  const Tensor<float> v = embed_neural(model, pairs.neural);
  const Tensor<float> w = embed_images(model, pairs.targets);
  std::string out = "modality,image_id,concept_id";
  for (std::size_t j = 0; j < v.dim(1); ++j) out += ",e" + std::to_string(j);
  out += "\n";
  char buf[32];
  auto emit = [&](const char* modality, const Tensor<float>& x) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
      out += modality;
      out += "," + pairs.ids[i] + "," + concept_ids[i];
      for (float e : x.row(i)) {
        std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(e));
        out += buf;
      }
      out += "\n";
    }
  };
  emit("neural", v);
  emit("image", w);
  return out;
}

inline void export_embeddings(const Model<float>& model, const PairedSet& pairs, const std::vector<std::string>& concept_ids,
                              const std::filesystem::path& path) {
  const std::string csv = embeddings_csv(model, pairs, concept_ids);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError(DataErrorCode::io, "cannot write " + path.string());
  f << csv;
  if (!f) throw DataError(DataErrorCode::io, "write failed: " + path.string());
}

}  // namespace stratalign
