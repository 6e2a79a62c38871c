// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "stratalign/core/tensor.hpp"
#include "stratalign/data/bank.hpp"
#include "stratalign/data/neb1.hpp"

namespace stratalign {

/// Preprocessed neural trials of one subject. `image_ids[i]` names the
/// stimulus of trial i; ids repeat until average_repetitions has been applied.
struct NeuralDataset {
  std::string subject_id;
  std::vector<std::string> channel_names;
  double sampling_rate_hz = 0.0;
  Tensor<float> trials;  // [n x C x T]
  std::vector<std::string> image_ids;

  std::size_t size() const { return image_ids.size(); }
  std::size_t channels() const { return trials.rank() == 3 ? trials.dim(1) : 0; }
  std::size_t times() const { return trials.rank() == 3 ? trials.dim(2) : 0; }
};

/// One row per image: the arithmetic mean of all trials showing it. Rows come
/// out in `required_ids` order when given, else in first-appearance order.
template <class T>
Tensor<T> average_repetitions(const Tensor<T>& trials, const std::vector<std::string>& trial_ids,
                              std::vector<std::string>& out_ids, const std::vector<std::string>* required_ids = nullptr) {
  if (trials.rows() != trial_ids.size()) throw ShapeError("average_repetitions: trial count and id count differ");
  std::unordered_map<std::string, std::size_t> slot;
  out_ids.clear();
  if (required_ids) {
    for (const auto& id : *required_ids)
      if (slot.emplace(id, out_ids.size()).second) out_ids.push_back(id);
  } else {
    for (const auto& id : trial_ids)
      if (slot.emplace(id, out_ids.size()).second) out_ids.push_back(id);
  }
  const std::size_t w = trials.row_width();
  std::vector<double> sums(out_ids.size() * w, 0.0);
  std::vector<std::size_t> counts(out_ids.size(), 0);
  for (std::size_t i = 0; i < trial_ids.size(); ++i) {
    auto it = slot.find(trial_ids[i]);
    if (it == slot.end()) continue;
    auto r = trials.row(i);
    double* acc = sums.data() + it->second * w;
    for (std::size_t j = 0; j < w; ++j) acc[j] += static_cast<double>(r[j]);
    ++counts[it->second];
  }
  Shape shape = trials.shape();
  shape[0] = out_ids.size();
  Tensor<T> out(shape);
  for (std::size_t k = 0; k < out_ids.size(); ++k) {
    if (counts[k] == 0) throw DataError(DataErrorCode::missing, "image '" + out_ids[k] + "' has no trials");
    auto o = out.row(k);
    for (std::size_t j = 0; j < w; ++j) o[j] = static_cast<T>(sums[k * w + j] / static_cast<double>(counts[k]));
  }
  return out;
}

inline NeuralDataset average_repetitions(const NeuralDataset& raw, const std::vector<std::string>* required_ids = nullptr) {
  NeuralDataset out;
  out.subject_id = raw.subject_id;
  out.channel_names = raw.channel_names;
  out.sampling_rate_hz = raw.sampling_rate_hz;
  out.trials = average_repetitions(raw.trials, raw.image_ids, out.image_ids, required_ids);
  return out;
}

inline constexpr double kZScoreEps = 1e-8;

/// Per channel, across all trials and time points: subtract the mean and
/// divide by sqrt(population variance + eps). Constant channels become zeros.
template <class T>
Tensor<T> zscore_channels(const Tensor<T>& x) {
  require_rank(x, 3, "zscore_channels");
  const std::size_t n = x.dim(0), c = x.dim(1), t = x.dim(2);
  Tensor<T> out(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < t; ++k) sum += static_cast<double>(x[(i * c + ch) * t + k]);
    const double count = static_cast<double>(n * t);
    const double mean = sum / count;
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < t; ++k) {
        const double d = static_cast<double>(x[(i * c + ch) * t + k]) - mean;
        var += d * d;
      }
    const double inv_std = 1.0 / std::sqrt(var / count + kZScoreEps);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < t; ++k)
        out[(i * c + ch) * t + k] = static_cast<T>((static_cast<double>(x[(i * c + ch) * t + k]) - mean) * inv_std);
  }
  return out;
}

/// Channel subset in keep-list order.
template <class T>
Tensor<T> select_channels(const Tensor<T>& x, const std::vector<std::string>& names,
                          const std::vector<std::string>& keep) {
  require_rank(x, 3, "select_channels");
  if (names.size() != x.dim(1)) throw ShapeError("select_channels: channel name count does not match tensor");
  std::vector<std::size_t> picks;
  for (const auto& k : keep) {
    auto it = std::find(names.begin(), names.end(), k);
    if (it == names.end()) throw DataError(DataErrorCode::missing, "unknown channel '" + k + "'");
    picks.push_back(static_cast<std::size_t>(it - names.begin()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), t = x.dim(2);
  Tensor<T> out({n, picks.size(), t});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < picks.size(); ++p)
      std::copy_n(x.data().begin() + (i * c + picks[p]) * t, t, out.data().begin() + (i * picks.size() + p) * t);
  return out;
}

inline NeuralDataset select_channels(const NeuralDataset& d, const std::vector<std::string>& keep) {
  NeuralDataset out = d;
  out.trials = select_channels(d.trials, d.channel_names, keep);
  out.channel_names = keep;
  return out;
}

/// Rows whose image id is in `ids`, in `ids` order.
inline NeuralDataset subset(const NeuralDataset& d, const std::vector<std::string>& ids) {
  std::unordered_map<std::string, std::size_t> row;
  for (std::size_t i = 0; i < d.image_ids.size(); ++i) row.emplace(d.image_ids[i], i);
  std::vector<std::size_t> picks;
  NeuralDataset out;
  out.subject_id = d.subject_id;
  out.channel_names = d.channel_names;
  out.sampling_rate_hz = d.sampling_rate_hz;
  for (const auto& id : ids) {
    auto it = row.find(id);
    if (it == row.end()) throw DataError(DataErrorCode::missing, "no neural trial for image '" + id + "'");
    picks.push_back(it->second);
    out.image_ids.push_back(id);
  }
  out.trials = gather_rows(d.trials, picks);
  return out;
}

// --- neural NEB1 ------------------------------------------------------------
// Same container as embedding banks with kind="neural", payload [count x C·T]
// and the channel/time layout in the header. item_ids may repeat (one entry
// per trial).

inline std::string encode_neural(const NeuralDataset& d) {
  require_rank(d.trials, 3, "encode_neural");
  if (d.channel_names.size() != d.channels()) throw ShapeError("encode_neural: channel names do not match tensor");
  neb1::Container c;
  c.header["kind"] = "neural";
  c.header["subject_id"] = d.subject_id;
  c.header["channels"] = d.channels();
  c.header["times"] = d.times();
  c.header["channel_names"] = d.channel_names;
  c.header["sampling_rate_hz"] = d.sampling_rate_hz;
  c.header["count"] = d.size();
  c.header["dim"] = d.channels() * d.times();
  c.header["dtype"] = "f32";
  c.header["item_ids"] = d.image_ids;
  c.payload = d.trials.storage();
  return neb1::encode(neb1::kBankMagic, c);
}

inline NeuralDataset decode_neural(std::string_view bytes) {
  neb1::Container c = neb1::decode(neb1::kBankMagic, bytes, detail::declared_payload);
  const auto& h = c.header;
  NeuralDataset d;
  try {
    if (h.value("kind", std::string()) != "neural") throw DataError(DataErrorCode::invalid, "file is not a neural array");
    const auto count = h.at("count").get<std::size_t>();
    const auto channels = h.at("channels").get<std::size_t>();
    const auto times = h.at("times").get<std::size_t>();
    if (channels * times != h.at("dim").get<std::size_t>())
      throw DataError(DataErrorCode::invalid, "neural header dim != channels * times");
    d.subject_id = h.value("subject_id", std::string());
    d.channel_names = h.at("channel_names").get<std::vector<std::string>>();
    d.sampling_rate_hz = h.value("sampling_rate_hz", 0.0);
    d.image_ids = h.at("item_ids").get<std::vector<std::string>>();
    if (d.image_ids.size() != count || d.channel_names.size() != channels)
      throw DataError(DataErrorCode::invalid, "neural header lists disagree with declared sizes");
    d.trials = Tensor<float>({count, channels, times}, std::move(c.payload));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataErrorCode::invalid, std::string("malformed neural header: ") + e.what());
  }
  return d;
}

inline void write_neural(const NeuralDataset& d, const std::filesystem::path& path) {
  neb1::write_file(path, encode_neural(d));
}

inline NeuralDataset read_neural(const std::filesystem::path& path) { return decode_neural(neb1::read_file(path)); }

}  // namespace stratalign
