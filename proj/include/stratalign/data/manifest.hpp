// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stratalign/core/error.hpp"

namespace stratalign {

inline constexpr std::array<const char*, 6> kCategories = {"animals", "food", "vehicles", "tools", "clothing", "others"};

struct Concept {
  std::string concept_id;
  std::string name;
  std::string category;
};

struct ImageEntry {
  std::string image_id;
  std::string concept_id;
  std::string split;  // train | test | val
};

struct NeuralSource {
  std::string subject;
  std::string path;  // relative to the manifest's directory unless absolute
  std::vector<std::string> channel_names;
  double sampling_rate_hz = 0.0;
};

/// Dataset index: which neural recordings and images exist, how they pair up,
/// and which split each image belongs to.
struct PairManifest {
  std::vector<std::string> subjects;
  std::vector<Concept> concepts;
  std::vector<ImageEntry> images;
  std::vector<NeuralSource> neural_sources;
  std::filesystem::path base_dir;  // not serialized

  void validate() const {
    std::set<std::string> concept_ids;
    for (const auto& c : concepts) {
      if (!concept_ids.insert(c.concept_id).second)
        throw DataError(DataErrorCode::invalid, "duplicate concept id '" + c.concept_id + "'");
      if (std::find_if(kCategories.begin(), kCategories.end(), [&](const char* k) { return c.category == k; }) ==
          kCategories.end())
        throw DataError(DataErrorCode::invalid, "concept '" + c.concept_id + "' has unknown category '" + c.category + "'");
    }
    std::set<std::string> image_ids, train_concepts, test_concepts;
    for (const auto& im : images) {
      if (!image_ids.insert(im.image_id).second)
        throw DataError(DataErrorCode::invalid, "duplicate image id '" + im.image_id + "'");
      if (!concept_ids.count(im.concept_id))
        throw DataError(DataErrorCode::missing, "image '" + im.image_id + "' references unknown concept '" +
                                                    im.concept_id + "'");
      if (im.split == "train")
        train_concepts.insert(im.concept_id);
      else if (im.split == "test")
        test_concepts.insert(im.concept_id);
      else if (im.split != "val")
        throw DataError(DataErrorCode::invalid, "image '" + im.image_id + "' has unknown split '" + im.split + "'");
    }
    for (const auto& c : test_concepts)
      if (train_concepts.count(c))
        throw DataError(DataErrorCode::invalid, "concept '" + c + "' appears in both train and test splits");
    for (const auto& src : neural_sources)
      if (std::find(subjects.begin(), subjects.end(), src.subject) == subjects.end())
        throw DataError(DataErrorCode::missing, "neural source for unlisted subject '" + src.subject + "'");
  }

  std::vector<std::string> image_ids(const std::string& split) const {
    std::vector<std::string> ids;
    for (const auto& im : images)
      if (im.split == split) ids.push_back(im.image_id);
    return ids;
  }

  /// image id -> category of its concept.
  std::map<std::string, std::string> image_categories() const {
    std::map<std::string, std::string> by_concept, out;
    for (const auto& c : concepts) by_concept[c.concept_id] = c.category;
    for (const auto& im : images) out[im.image_id] = by_concept.at(im.concept_id);
    return out;
  }

  std::map<std::string, std::string> image_concepts() const {
    std::map<std::string, std::string> out;
    for (const auto& im : images) out[im.image_id] = im.concept_id;
    return out;
  }

  const NeuralSource& source(const std::string& subject) const {
    for (const auto& s : neural_sources)
      if (s.subject == subject) return s;
    throw DataError(DataErrorCode::missing, "no neural source for subject '" + subject + "'");
  }

  std::filesystem::path resolve(const std::string& path) const {
    std::filesystem::path p(path);
    return p.is_absolute() ? p : base_dir / p;
  }
};

inline nlohmann::json to_json(const PairManifest& m) {
  nlohmann::json j;
  j["version"] = 1;
  j["subjects"] = m.subjects;
  j["concepts"] = nlohmann::json::array();
  for (const auto& c : m.concepts)
    j["concepts"].push_back({{"concept_id", c.concept_id}, {"name", c.name}, {"category", c.category}});
  j["images"] = nlohmann::json::array();
  for (const auto& im : m.images)
    j["images"].push_back({{"image_id", im.image_id}, {"concept_id", im.concept_id}, {"split", im.split}});
  j["neural_sources"] = nlohmann::json::array();
  for (const auto& s : m.neural_sources)
    j["neural_sources"].push_back({{"subject", s.subject},
                                   {"path", s.path},
                                   {"channel_names", s.channel_names},
                                   {"sampling_rate_hz", s.sampling_rate_hz}});
  return j;
}

inline PairManifest manifest_from_json(const nlohmann::json& j) {
  PairManifest m;
  try {
    m.subjects = j.at("subjects").get<std::vector<std::string>>();
    for (const auto& c : j.at("concepts"))
      m.concepts.push_back({c.at("concept_id").get<std::string>(), c.value("name", std::string()),
                            c.at("category").get<std::string>()});
    for (const auto& im : j.at("images"))
      m.images.push_back(
          {im.at("image_id").get<std::string>(), im.at("concept_id").get<std::string>(), im.at("split").get<std::string>()});
    for (const auto& s : j.value("neural_sources", nlohmann::json::array()))
      m.neural_sources.push_back({s.at("subject").get<std::string>(), s.at("path").get<std::string>(),
                                  s.value("channel_names", std::vector<std::string>()),
                                  s.value("sampling_rate_hz", 0.0)});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataErrorCode::invalid, std::string("malformed manifest: ") + e.what());
  }
  m.validate();
  return m;
}

inline PairManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataErrorCode::io, "cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataErrorCode::invalid, "manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  PairManifest m = manifest_from_json(j);
  m.base_dir = path.parent_path();
  return m;
}

inline void save_manifest(const PairManifest& m, const std::filesystem::path& path) {
  m.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(DataErrorCode::io, "cannot write manifest " + path.string());
  out << to_json(m).dump(2) << '\n';
}

}  // namespace stratalign
