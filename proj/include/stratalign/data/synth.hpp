// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Synthetic hierarchical embeddings. Each image i of concept c gets a concept
// centre mu_c and an instance detail d_i. Layer l of the simulated backbone
// emits alpha_l*mu_c + beta_l*d_i + sigma_l*noise: early layers are noisy,
// late layers drop instance detail (beta_L = 0 collapses every image of a
// concept onto one point). The neural signal sees both mu_c and d_i through a
// fixed random linear map plus sensor noise.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "stratalign/core/ops.hpp"
#include "stratalign/data/bank.hpp"
#include "stratalign/data/manifest.hpp"
#include "stratalign/data/neural.hpp"

namespace stratalign {

struct LayerSchedule {
  double alpha = 1.0;  // concept weight
  double beta = 0.0;   // instance-detail weight
  double sigma = 0.0;  // per-image noise scale
};

/// alpha rises, beta falls to exactly zero at the last layer and noise fades
/// out with depth.
inline std::vector<LayerSchedule> default_schedule(std::size_t num_layers) {
  std::vector<LayerSchedule> s(num_layers);
  for (std::size_t l = 0; l < num_layers; ++l) {
    const double r = num_layers > 1 ? static_cast<double>(l) / static_cast<double>(num_layers - 1) : 1.0;
    s[l].alpha = 0.3 + 0.7 * r;
    s[l].beta = 1.0 - r * r;
    s[l].sigma = 1.5 * (1.0 - r) * (1.0 - r);
  }
  if (!s.empty()) s.back().beta = 0.0;
  return s;
}

struct SynthSpec {
  std::size_t num_concepts = 1000;
  std::size_t num_test_concepts = 200;
  std::size_t images_per_concept = 10;
  std::vector<LayerSchedule> layers = default_schedule(6);
  double neural_concept_weight = 1.0;
  double neural_detail_weight = 1.0;
  double neural_noise = 1.0;
  std::size_t dim = 64;
  std::size_t channels = 16;
  std::size_t times = 32;
  std::size_t repetitions = 1;
  std::uint64_t seed = 7;
  std::string backbone_name = "synthetic";

  void validate() const {
    if (layers.size() < 2) throw UsageError("synth: need at least two layers");
    if (layers.back().beta != 0.0) throw UsageError("synth: final layer must have beta = 0 (collapsed)");
    bool has_mixed_intermediate = false;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& s = layers[l];
      if (s.alpha < 0 || s.beta < 0 || s.sigma < 0) throw UsageError("synth: schedule weights must be non-negative");
      if (l + 1 < layers.size() && s.alpha > 0 && s.beta > 0) has_mixed_intermediate = true;
    }
    if (!has_mixed_intermediate)
      throw UsageError("synth: some intermediate layer needs both alpha > 0 and beta > 0");
    if (num_test_concepts == 0 || num_test_concepts >= num_concepts)
      throw UsageError("synth: test concepts must be in [1, concepts)");
    if (images_per_concept == 0 || repetitions == 0 || dim == 0 || channels == 0 || times == 0)
      throw UsageError("synth: sizes must be positive");
    if (neural_noise < 0) throw UsageError("synth: neural noise must be non-negative");
  }
};

struct SynthData {
  NeuralDataset recording;  // raw trials, `repetitions` per image
  NeuralDataset averaged;   // one row per image
  std::vector<EmbeddingBank> banks;  // one per layer, layer_index 1..L
  PairManifest manifest;
};

namespace detail {
inline std::string numbered(const char* prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
  return buf;
}

enum SynthStream : std::uint64_t { kConceptStream = 1, kDetailStream, kMixStream, kNeuralNoiseStream, kLayerStreamBase = 100 };
}  // namespace detail

inline std::string synth_subject() { return "sub-01"; }
inline std::string synth_neural_file() { return "neural_sub-01.neb"; }

inline SynthData synth_generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t K = spec.num_concepts, per = spec.images_per_concept, n = K * per, D = spec.dim;
  const std::size_t L = spec.layers.size();
  const double unit = 1.0 / std::sqrt(static_cast<double>(D));

  SynthData out;
  PairManifest& m = out.manifest;
  m.subjects = {synth_subject()};
  for (std::size_t c = 0; c < K; ++c)
    m.concepts.push_back({detail::numbered("c", c, 4), detail::numbered("concept-", c, 4), kCategories[c % kCategories.size()]});
  const std::size_t first_test = K - spec.num_test_concepts;
  std::vector<std::string> ids;
  for (std::size_t c = 0; c < K; ++c)
    for (std::size_t k = 0; k < per; ++k) {
      ids.push_back(detail::numbered("img", c * per + k, 6));
      m.images.push_back({ids.back(), m.concepts[c].concept_id, c >= first_test ? "test" : "train"});
    }

  // Independent streams, so e.g. changing repetitions leaves the banks unchanged.
  Rng concept_rng = Rng::derive(spec.seed, detail::kConceptStream);
  Rng detail_rng = Rng::derive(spec.seed, detail::kDetailStream);
  Rng mix_rng = Rng::derive(spec.seed, detail::kMixStream);
  Rng noise_rng = Rng::derive(spec.seed, detail::kNeuralNoiseStream);
  const Tensor<double> centres = rng_normal<double>({K, D}, concept_rng, unit);
  const Tensor<double> details = rng_normal<double>({n, D}, detail_rng, unit);

  for (std::size_t l = 0; l < L; ++l) {
    const LayerSchedule& s = spec.layers[l];
    Rng layer_rng = Rng::derive(spec.seed, detail::kLayerStreamBase + l);
    Tensor<float> matrix({n, D});
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = i / per;
      for (std::size_t j = 0; j < D; ++j) {
        double v = s.alpha * centres[c * D + j] + s.beta * details[i * D + j];
        if (s.sigma > 0) v += s.sigma * layer_rng.normal() * unit;
        matrix[i * D + j] = static_cast<float>(v);
      }
    }
    out.banks.push_back(make_bank(spec.backbone_name, static_cast<int>(l + 1), static_cast<int>(L), "synthetic",
                                  ids, std::move(matrix)));
  }

  // Neural trial = A·[w_c·mu_c ; w_d·d_i] + noise, reshaped to C x T.
  const std::size_t features = spec.channels * spec.times;
  const Tensor<double> mixing = rng_normal<double>({2 * D, features}, mix_rng, 1.0);
  Tensor<double> latent({n, 2 * D});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < D; ++j) {
      latent[i * 2 * D + j] = spec.neural_concept_weight * centres[(i / per) * D + j];
      latent[i * 2 * D + D + j] = spec.neural_detail_weight * details[i * D + j];
    }
  const Tensor<double> clean = matmul(latent, mixing);

  NeuralDataset& rec = out.recording;
  rec.subject_id = synth_subject();
  rec.sampling_rate_hz = 250.0;
  for (std::size_t ch = 0; ch < spec.channels; ++ch) rec.channel_names.push_back(detail::numbered("Ch", ch + 1, 2));
  rec.trials = Tensor<float>({n * spec.repetitions, spec.channels, spec.times});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < spec.repetitions; ++r) {
      const std::size_t row = i * spec.repetitions + r;
      for (std::size_t f = 0; f < features; ++f)
        rec.trials[row * features + f] = static_cast<float>(clean[i * features + f] + spec.neural_noise * noise_rng.normal());
      rec.image_ids.push_back(ids[i]);
    }
  out.averaged = average_repetitions(rec, &ids);
  m.neural_sources.push_back({rec.subject_id, synth_neural_file(), rec.channel_names, rec.sampling_rate_hz});
  m.validate();
  return out;
}

}  // namespace stratalign
