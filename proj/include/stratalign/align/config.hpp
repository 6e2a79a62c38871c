// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stratalign/align/projector.hpp"
#include "stratalign/encoders/encoders.hpp"

namespace stratalign {

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  std::size_t batch_size = 1024;
  std::size_t epochs = 50;
  double init_temperature = 0.07;
  double min_temperature = 0.01;
  double dropout_p = 0.3;
  std::uint64_t seed = 0;
  std::size_t shared_dim = 1024;   // d_s
  std::size_t encoder_dim = 1024;  // D
  Arch arch = Arch::eegproject;
  ProjectorMode projector = ProjectorMode::linear;
  std::size_t tsconv_filters = 40;
  std::vector<std::string> channels;  // keep-list; empty keeps all
  bool zscore = false;
  bool log_test_loss = true;

  void validate() const {
    if (!(learning_rate >= 0.0)) throw UsageError("learning_rate must be non-negative");
    if (!(weight_decay >= 0.0)) throw UsageError("weight_decay must be non-negative");
    if (batch_size == 0) throw UsageError("batch_size must be positive");
    if (!(init_temperature > 0.0) || !(min_temperature > 0.0) || init_temperature < min_temperature)
      throw UsageError("temperatures must be positive with init >= min");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw UsageError("dropout_p must lie in [0, 1)");
    if (shared_dim < 2 || encoder_dim < 2) throw UsageError("embedding widths must be at least 2");
  }

  /// Upper clamp of the learnable log inverse temperature.
  double max_logit_scale() const { return std::log(1.0 / min_temperature); }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"init_temperature", c.init_temperature},
          {"min_temperature", c.min_temperature},
          {"dropout_p", c.dropout_p},
          {"seed", c.seed},
          {"shared_dim", c.shared_dim},
          {"encoder_dim", c.encoder_dim},
          {"arch", to_string(c.arch)},
          {"projector", to_string(c.projector)},
          {"tsconv_filters", c.tsconv_filters},
          {"channels", c.channels},
          {"zscore", c.zscore},
          {"log_test_loss", c.log_test_loss}};
}

/// Overlays the keys present in `j` onto `base`. Unknown keys are rejected.
inline TrainConfig apply_json(TrainConfig c, const nlohmann::json& j) {
  if (!j.is_object()) throw UsageError("train config must be a JSON object");
  const nlohmann::json known = to_json(c);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key())) throw UsageError("unknown train config key '" + it.key() + "'");
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.init_temperature = j.value("init_temperature", c.init_temperature);
    c.min_temperature = j.value("min_temperature", c.min_temperature);
    c.dropout_p = j.value("dropout_p", c.dropout_p);
    c.seed = j.value("seed", c.seed);
    c.shared_dim = j.value("shared_dim", c.shared_dim);
    c.encoder_dim = j.value("encoder_dim", c.encoder_dim);
    if (j.contains("arch")) c.arch = parse_arch(j["arch"].get<std::string>());
    if (j.contains("projector")) c.projector = parse_projector(j["projector"].get<std::string>());
    c.tsconv_filters = j.value("tsconv_filters", c.tsconv_filters);
    c.channels = j.value("channels", c.channels);
    c.zscore = j.value("zscore", c.zscore);
    c.log_test_loss = j.value("log_test_loss", c.log_test_loss);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("bad train config value: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace stratalign
