// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// NCK1 checkpoint: the NEB1 container with magic "NCK1". The JSON header holds
// the training config, encoder layout, epoch, optimizer step, RNG state and
// the ordered tensor table; the float32 payload is
//
//   [all parameters in table order] [AdamW m, same order] [AdamW v, same order]
//
// Parameter order is Model::parameters(): encoder tensors as listed by the
// encoder's visit(), then W_N, b_N, W_I, b_I (linear projector only), then
// logit_scale.

#include <filesystem>
#include <string>

#include "stratalign/align/model.hpp"
#include "stratalign/data/neb1.hpp"

namespace stratalign {

struct ModelCheckpoint {
  Model<float> model;
  AdamWState<float> optimizer;
  TrainConfig config;
  std::uint64_t epoch = 0;
  std::string rng_state;
  nlohmann::json data = nlohmann::json::object();  // provenance of the training inputs
};

inline nlohmann::json to_json(const EncoderDims& d) {
  return {{"arch", to_string(d.arch)}, {"channels", d.channels},       {"times", d.times},
          {"dim", d.dim},              {"dropout_p", d.dropout_p},     {"filters", d.filters},
          {"temporal_kernel", d.temporal_kernel}, {"pool_window", d.pool_window}, {"pool_stride", d.pool_stride}};
}

inline EncoderDims encoder_dims_from_json(const nlohmann::json& j) {
  EncoderDims d;
  d.arch = parse_arch(j.at("arch").get<std::string>());
  d.channels = j.at("channels").get<std::size_t>();
  d.times = j.at("times").get<std::size_t>();
  d.dim = j.at("dim").get<std::size_t>();
  d.dropout_p = j.at("dropout_p").get<double>();
  d.filters = j.at("filters").get<std::size_t>();
  d.temporal_kernel = j.at("temporal_kernel").get<std::size_t>();
  d.pool_window = j.at("pool_window").get<std::size_t>();
  d.pool_stride = j.at("pool_stride").get<std::size_t>();
  return d;
}

inline std::string encode_checkpoint(const ModelCheckpoint& ck) {
  Model<float> model = ck.model;
  auto params = model.parameters();
  neb1::Container c;
  auto& h = c.header;
  h["config"] = to_json(ck.config);
  h["encoder"] = to_json(encoder_dims(model.encoder));
  h["projector"] = to_string(model.projector.mode);
  h["epoch"] = ck.epoch;
  h["optimizer_step"] = ck.optimizer.step;
  h["adamw"] = {{"beta1", ck.optimizer.config.beta1}, {"beta2", ck.optimizer.config.beta2}, {"eps", ck.optimizer.config.eps}};
  h["rng_state"] = ck.rng_state;
  h["data"] = ck.data;
  h["sections"] = {"params", "adam_m", "adam_v"};
  h["dtype"] = "f32";
  nlohmann::json table = nlohmann::json::array();
  std::size_t total = 0;
  for (const auto& p : params) {
    table.push_back({{"name", p.name}, {"shape", p.value->shape()}});
    total += p.value->size();
  }
  h["tensors"] = table;
  h["floats_per_section"] = total;
  const bool have_moments = ck.optimizer.m.size() == params.size();
  c.payload.reserve(3 * total);
  for (const auto& p : params) c.payload.insert(c.payload.end(), p.value->storage().begin(), p.value->storage().end());
  for (const auto* moments : {&ck.optimizer.m, &ck.optimizer.v})
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (have_moments) {
        const auto& t = (*moments)[i];
        c.payload.insert(c.payload.end(), t.storage().begin(), t.storage().end());
      } else {
        c.payload.insert(c.payload.end(), params[i].value->size(), 0.0f);
      }
    }
  return neb1::encode(neb1::kCheckpointMagic, c);
}

inline ModelCheckpoint decode_checkpoint(std::string_view bytes) {
  auto payload_size = [](const nlohmann::json& h) -> std::size_t {
    if (!h.contains("floats_per_section") || !h["floats_per_section"].is_number_unsigned())
      throw DataError(DataErrorCode::invalid, "checkpoint header lacks floats_per_section");
    return 3 * h["floats_per_section"].get<std::size_t>();
  };
  neb1::Container c = neb1::decode(neb1::kCheckpointMagic, bytes, payload_size);
  const auto& h = c.header;
  ModelCheckpoint ck;
  try {
    ck.config = apply_json(TrainConfig{}, h.at("config"));
    const EncoderDims dims = encoder_dims_from_json(h.at("encoder"));
    if (dims.arch == Arch::eegproject) {
      EEGProjectParams<float> p;
      p.channels = dims.channels;
      p.times = dims.times;
      p.dropout_p = dims.dropout_p;
      ck.model.encoder = p;
    } else {
      TSConvParams<float> p;
      p.dims = dims;
      ck.model.encoder = p;
    }
    ck.model.projector.mode = parse_projector(h.at("projector").get<std::string>());
    ck.epoch = h.at("epoch").get<std::uint64_t>();
    ck.optimizer.step = h.at("optimizer_step").get<std::uint64_t>();
    ck.optimizer.config = {h.at("adamw").at("beta1").get<double>(), h.at("adamw").at("beta2").get<double>(),
                           h.at("adamw").at("eps").get<double>()};
    ck.rng_state = h.at("rng_state").get<std::string>();
    ck.data = h.value("data", nlohmann::json::object());
    auto params = ck.model.parameters();
    const auto& table = h.at("tensors");
    if (table.size() != params.size())
      throw DataError(DataErrorCode::invalid, "checkpoint tensor table does not match the declared architecture");
    std::size_t offset = 0;
    const std::size_t section = h.at("floats_per_section").get<std::size_t>();
    std::vector<Shape> shapes;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (table[i].at("name").get<std::string>() != params[i].name)
        throw DataError(DataErrorCode::invalid, "checkpoint tensor " + std::to_string(i) + " is '" +
                                                    table[i].at("name").get<std::string>() + "', expected '" +
                                                    params[i].name + "'");
      shapes.push_back(table[i].at("shape").get<Shape>());
    }
    for (int s = 0; s < 3; ++s) {
      offset = s * section;
      for (std::size_t i = 0; i < params.size(); ++i) {
        const std::size_t n = shape_size(shapes[i]);
        if (offset + n > (s + 1) * section) throw DataError(DataErrorCode::size_mismatch, "tensor table overruns payload");
        Tensor<float> t(shapes[i], std::vector<float>(c.payload.begin() + offset, c.payload.begin() + offset + n));
        offset += n;
        if (s == 0)
          *params[i].value = std::move(t);
        else
          (s == 1 ? ck.optimizer.m : ck.optimizer.v).push_back(std::move(t));
      }
      if (offset != (s + 1) * section) throw DataError(DataErrorCode::size_mismatch, "tensor table underruns payload");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataErrorCode::invalid, std::string("malformed checkpoint header: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(DataErrorCode::invalid, std::string("checkpoint: ") + e.what());
  }
  return ck;
}

inline void save_checkpoint(const ModelCheckpoint& ck, const std::filesystem::path& path) {
  neb1::write_file(path, encode_checkpoint(ck));
}

inline ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(neb1::read_file(path));
}

}  // namespace stratalign
