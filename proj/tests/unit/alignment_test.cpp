// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "../common/test_util.hpp"

namespace stratalign {
namespace {

using testing::max_gradient_error;
using testing::probe;
using testing::random_tensor;

// --- Projectors -------------------------------------------------------------------

TEST(Projector, LinearMatchesExplicitAffineMap) {
  Rng rng(1);
  auto p = init_projector<double>(ProjectorMode::linear, 5, 3, 4, rng);
  p.b_neural = random_tensor({4}, rng);
  p.b_image = random_tensor({4}, rng);
  const auto zn = random_tensor({2, 5}, rng);
  const auto zi = random_tensor({2, 3}, rng);
  const auto out = project(p, zn, zi);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double v = p.b_neural[j], w = p.b_image[j];
      for (std::size_t k = 0; k < 5; ++k) v += zn.at(i, k) * p.w_neural.at(k, j);
      for (std::size_t k = 0; k < 3; ++k) w += zi.at(i, k) * p.w_image.at(k, j);
      EXPECT_NEAR(out.v.at(i, j), v, 1e-12);
      EXPECT_NEAR(out.w.at(i, j), w, 1e-12);
    }
  EXPECT_THROW(project(p, random_tensor({2, 4}, rng), zi), ShapeError);
}

TEST(Projector, IdentityAndUnitWeightsPassThrough) {
  Rng rng(2);
  const auto zn = random_tensor({3, 4}, rng);
  const auto zi = random_tensor({3, 4}, rng);
  const auto id = init_projector<double>(ProjectorMode::identity, 4, 4, 4, rng);
  EXPECT_EQ(project(id, zn, zi).v, zn);
  EXPECT_EQ(project(id, zn, zi).w, zi);
  EXPECT_THROW(init_projector<double>(ProjectorMode::identity, 4, 5, 4, rng), UsageError);
  auto unit = init_projector<double>(ProjectorMode::linear, 4, 4, 4, rng);
  unit.w_neural = Tensor<double>({4, 4});
  for (std::size_t i = 0; i < 4; ++i) unit.w_neural.at(i, i) = 1;
  unit.w_image = unit.w_neural;
  EXPECT_EQ(project(unit, zn, zi).v, zn);
}

// --- Contrastive loss ---------------------------------------------------------------

TEST(Contrastive, SinglePairLossIsExactlyZero) {
  Rng rng(3);
  const auto r = contrastive_loss(random_tensor({1, 8}, rng), random_tensor({1, 8}, rng), 0.07);
  EXPECT_EQ(r.loss, 0.0);
}

TEST(Contrastive, UniformSimilarityGivesLogM) {
  for (std::size_t m : {2u, 5u, 64u}) {
    Tensor<double> v({m, 3}, 1.0);
    const auto r = contrastive_loss(v, v, 0.3);
    EXPECT_NEAR(r.loss, std::log(static_cast<double>(m)), 1e-6);
  }
}

TEST(Contrastive, IdentitySimilarityClosedForm) {
  const auto eye = Tensor<double>::matrix({{1, 0}, {0, 1}});
  EXPECT_NEAR(contrastive_loss(eye, eye, 1.0).loss, std::log1p(std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(contrastive_loss(eye, eye, 1.0).loss, 0.313262, 1e-6);
}

TEST(Contrastive, ModalitySwapIsExact) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto v = rng_normal<float>({17, 9}, rng);
    const auto w = rng_normal<float>({17, 9}, rng);
    const auto a = contrastive_loss(v, w, 0.07f);
    const auto b = contrastive_loss(w, v, 0.07f);
    EXPECT_EQ(a.loss, b.loss);
    EXPECT_EQ(a.grad_v, b.grad_w);
    EXPECT_EQ(a.grad_w, b.grad_v);
    EXPECT_EQ(a.grad_temperature, b.grad_temperature);
  }
}

TEST(Contrastive, JointPermutationAndRowRescalingInvariance) {
  Rng rng(5);
  const auto v = random_tensor({12, 6}, rng);
  const auto w = random_tensor({12, 6}, rng);
  const double base = contrastive_loss(v, w, 0.1).loss;
  std::vector<std::size_t> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  EXPECT_NEAR(contrastive_loss(gather_rows(v, perm), gather_rows(w, perm), 0.1).loss, base, 1e-12);
  auto vs = v, ws = w;
  for (std::size_t i = 0; i < 12; ++i) {
    const double a = 0.01 + 10 * rng.uniform(), b = 0.01 + 10 * rng.uniform();
    for (std::size_t j = 0; j < 6; ++j) {
      vs.at(i, j) *= a;
      ws.at(i, j) *= b;
    }
  }
  EXPECT_LT(std::abs(contrastive_loss(vs, ws, 0.1).loss - base), 1e-5);
}

TEST(Contrastive, RandomEmbeddingsConcentrateNearLogM) {
  Rng rng(6);
  const auto r = contrastive_loss(random_tensor({32, 4096}, rng), random_tensor({32, 4096}, rng), 1.0);
  EXPECT_GE(r.loss, 0.0);
  EXPECT_NEAR(r.loss, std::log(32.0), 0.02);
}

TEST(Contrastive, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  auto v = random_tensor({6, 5}, rng);
  auto w = random_tensor({6, 5}, rng);
  const double tau = 0.2;
  const auto r = contrastive_loss(v, w, tau);
  auto f = [&] { return contrastive_loss(v, w, tau, false).loss; };
  EXPECT_LT(max_gradient_error(v, r.grad_v, f), 1e-5);
  EXPECT_LT(max_gradient_error(w, r.grad_w, f), 1e-5);
  const double h = 1e-6;
  const double numeric = (contrastive_loss(v, w, tau + h, false).loss - contrastive_loss(v, w, tau - h, false).loss) / (2 * h);
  EXPECT_NEAR(r.grad_temperature, numeric, 1e-6 * std::max(1.0, std::abs(numeric)));
}

TEST(Contrastive, ErrorsOnZeroRowAndBadTemperature) {
  Tensor<double> v({2, 3}, 1.0);
  Tensor<double> w({2, 3});
  EXPECT_THROW(contrastive_loss(v, w, 0.1), NumericError);
  EXPECT_THROW(contrastive_loss(v, v, 0.0), UsageError);
  EXPECT_THROW(contrastive_loss(v, Tensor<double>({3, 3}, 1.0), 0.1), ShapeError);
}

// --- End-to-end gradient ---------------------------------------------------------------

void expect_end_to_end_gradients(Arch arch) {
  TrainConfig cfg;
  cfg.arch = arch;
  cfg.encoder_dim = 16;
  cfg.shared_dim = 8;
  cfg.tsconv_filters = 3;
  Rng init(8);
  Model<double> model;
  if (arch == Arch::eegproject) {
    model = init_model<double>(cfg, 4, 8, 6, init);
  } else {
    EncoderDims d;
    d.arch = Arch::tsconv;
    d.channels = 4;
    d.times = 8;
    d.dim = 16;
    d.filters = 3;
    d.temporal_kernel = 3;
    d.pool_window = 3;
    d.pool_stride = 2;
    model.encoder = init_params<double>(d, init);
    model.projector = init_projector<double>(ProjectorMode::linear, 16, 6, 8, init);
    model.logit_scale[0] = std::log(1 / 0.07);
  }
  const auto neural = random_tensor({4, 4, 8}, init);
  const auto targets = random_tensor({4, 6}, init);
  const Rng dropout(5);
  Model<double> grads = zeros_like(model);
  Rng rng = dropout;
  loss_and_gradients(model, neural, targets, Mode::train, &rng, grads);
  auto f = [&] {
    Rng r = dropout;
    Model<double> scratch = zeros_like(model);
    EncoderCache<double> cache;
    const auto z = encoder_forward(model.encoder, neural, Mode::train, &r, cache);
    const auto p = project(model.projector, z, targets);
    return contrastive_loss(p.v, p.w, model.temperature(), false).loss;
  };
  auto params = model.parameters();
  auto g = grads.parameters();
  ASSERT_EQ(params.size(), g.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    EXPECT_LT(max_gradient_error(*params[i].value, *g[i].value, f), 1e-5) << params[i].name;
}

TEST(EndToEnd, EEGProjectGradients) { expect_end_to_end_gradients(Arch::eegproject); }
TEST(EndToEnd, TSConvGradients) { expect_end_to_end_gradients(Arch::tsconv); }

// --- AdamW -------------------------------------------------------------------------------

double one_step(double theta, double g, double lr, double wd, bool decay = true) {
  Tensor<double> p({1}, theta), grad({1}, g);
  std::vector<ParamRef<double>> params = {{"p", &p, decay}};
  std::vector<const Tensor<double>*> grads = {&grad};
  AdamWState<double> state;
  adamw_step<double>(params, grads, state, lr, wd);
  return p[0];
}

TEST(AdamW, HandComputedSingleSteps) {
  EXPECT_NEAR(one_step(1.0, 1.0, 0.1, 0.0), 0.9, 1e-6);
  EXPECT_NEAR(one_step(1.0, 1.0, 0.1, 0.1), 0.89, 1e-6);
  EXPECT_EQ(one_step(1.0, 0.0, 0.1, 0.0), 1.0);
}

TEST(AdamW, DecayIsDecoupledAndSelective) {
  // g = 0: the Adam term vanishes and only θ ← θ − lr·wd·θ remains.
  EXPECT_NEAR(one_step(2.0, 0.0, 0.1, 0.5), 2.0 - 0.1 * 0.5 * 2.0, 1e-15);
  EXPECT_EQ(one_step(2.0, 0.0, 0.1, 0.5, /*decay=*/false), 2.0);
}

TEST(AdamW, MomentsAndStepCount) {
  Tensor<double> p({2}, 1.0), g = Tensor<double>::vector({1.0, -2.0});
  std::vector<ParamRef<double>> params = {{"p", &p, true}};
  std::vector<const Tensor<double>*> grads = {&g};
  AdamWState<double> s;
  for (int t = 0; t < 3; ++t) adamw_step<double>(params, grads, s, 0.01, 0.0);
  EXPECT_EQ(s.step, 3u);
  EXPECT_NEAR(s.m[0][1], -2.0 * (1 - std::pow(0.9, 3)), 1e-12);
  EXPECT_NEAR(s.v[0][1], 4.0 * (1 - std::pow(0.999, 3)), 1e-12);
  for (double v : s.v[0].data()) EXPECT_GE(v, 0.0);
}

// --- Training loop ---------------------------------------------------------------------------

PairedSet synthetic_pairs(std::size_t n, std::uint64_t seed, std::size_t dim = 12) {
  Rng rng(seed);
  PairedSet p;
  p.targets = rng_normal<float>({n, dim}, rng);
  const auto mix = rng_normal<float>({dim, 4 * 8}, rng);
  p.neural = matmul(p.targets, mix).reshaped({n, 4, 8});
  for (std::size_t i = 0; i < n; ++i) p.ids.push_back("x" + std::to_string(i));
  return p;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.encoder_dim = 32;
  cfg.shared_dim = 16;
  cfg.batch_size = 16;
  cfg.epochs = 3;
  cfg.learning_rate = 1e-3;
  cfg.seed = 4;
  return cfg;
}

TEST(Fit, SameSeedGivesBitIdenticalCheckpoints) {
  const auto train = synthetic_pairs(40, 1), test = synthetic_pairs(10, 2);
  const auto a = fit(train, &test, small_config());
  const auto b = fit(train, &test, small_config());
  EXPECT_EQ(encode_checkpoint(a.checkpoint), encode_checkpoint(b.checkpoint));
  ASSERT_EQ(a.history.size(), 3u);
  EXPECT_TRUE(a.history[0].test_loss.has_value());
  auto other = small_config();
  other.seed = 5;
  EXPECT_NE(encode_checkpoint(fit(train, &test, other).checkpoint), encode_checkpoint(a.checkpoint));
}

TEST(Fit, ZeroLearningRateLeavesParametersUnchanged) {
  auto cfg = small_config();
  cfg.learning_rate = 0;
  const auto train = synthetic_pairs(20, 3);
  Rng init = Rng::derive(cfg.seed, 1);
  Model<float> initial = init_model<float>(cfg, 4, 8, 12, init);
  auto fitted = fit(train, nullptr, cfg).checkpoint.model;
  auto a = initial.parameters();
  auto b = fitted.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i].value, *b[i].value) << a[i].name;
}

TEST(Fit, ResumeReproducesTheUninterruptedRun) {
  const auto train = synthetic_pairs(40, 6), test = synthetic_pairs(8, 7);
  auto cfg = small_config();
  cfg.epochs = 4;
  const auto full = fit(train, &test, cfg);
  auto half_cfg = cfg;
  half_cfg.epochs = 2;
  const auto half = fit(train, &test, half_cfg);
  const auto restored = decode_checkpoint(encode_checkpoint(half.checkpoint));
  const auto resumed = fit(train, &test, cfg, {}, &restored);
  EXPECT_EQ(encode_checkpoint(resumed.checkpoint), encode_checkpoint(full.checkpoint));
  ASSERT_EQ(resumed.history.size(), 2u);
  EXPECT_EQ(resumed.history[1].train_loss, full.history[3].train_loss);
}

TEST(Fit, TrainLossDecreasesAndTemperatureStaysClamped) {
  auto cfg = small_config();
  cfg.epochs = 30;
  cfg.learning_rate = 3e-3;
  cfg.min_temperature = 0.05;
  const auto train = synthetic_pairs(32, 8);
  std::vector<double> taus;
  FitCallbacks cb;
  cb.on_epoch = [&](const EpochLog& log, const Model<float>&) { taus.push_back(log.temperature); };
  const auto r = fit(train, nullptr, cfg, cb);
  EXPECT_LT(r.history.back().train_loss, r.history.front().train_loss);
  for (double t : taus) EXPECT_GE(t, 0.05 * (1 - 1e-6));
  EXPECT_EQ(taus.size(), 30u);
}

TEST(Fit, NonFiniteInputAbortsWithNumericError) {
  auto train = synthetic_pairs(8, 9);
  train.neural[3] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(fit(train, nullptr, small_config()), NumericError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto train = synthetic_pairs(16, 10);
  auto cfg = small_config();
  cfg.arch = Arch::eegproject;
  auto r = fit(train, nullptr, cfg);
  r.checkpoint.data = {{"manifest", "/x/m.json"}};
  const std::string bytes = encode_checkpoint(r.checkpoint);
  EXPECT_EQ(bytes.substr(0, 4), "NCK1");
  const auto back = decode_checkpoint(bytes);
  EXPECT_EQ(encode_checkpoint(back), bytes);
  EXPECT_EQ(back.epoch, 3u);
  EXPECT_EQ(back.data.at("manifest"), "/x/m.json");
  std::string corrupt = bytes;
  corrupt.resize(corrupt.size() - 8);
  EXPECT_THROW(decode_checkpoint(corrupt), DataError);
}

TEST(Checkpoint, TSConvAndIdentityProjectorRoundTrip) {
  Rng rng(11);
  auto cfg = small_config();
  cfg.projector = ProjectorMode::identity;
  cfg.encoder_dim = cfg.shared_dim = 12;
  cfg.arch = Arch::tsconv;
  cfg.tsconv_filters = 2;
  PairedSet train;
  train.targets = rng_normal<float>({8, 12}, rng);
  train.neural = rng_normal<float>({8, 2, 80}, rng);
  for (int i = 0; i < 8; ++i) train.ids.push_back(std::to_string(i));
  cfg.epochs = 1;
  const auto r = fit(train, nullptr, cfg);
  const std::string bytes = encode_checkpoint(r.checkpoint);
  EXPECT_EQ(encode_checkpoint(decode_checkpoint(bytes)), bytes);
}

TEST(Config, JsonOverlayRejectsUnknownKeys) {
  const auto cfg = apply_json(TrainConfig{}, {{"epochs", 7}, {"arch", "tsconv"}});
  EXPECT_EQ(cfg.epochs, 7u);
  EXPECT_EQ(cfg.arch, Arch::tsconv);
  EXPECT_EQ(cfg.batch_size, 1024u);
  EXPECT_THROW(apply_json(TrainConfig{}, {{"epoch", 7}}), UsageError);
  EXPECT_THROW(apply_json(TrainConfig{}, {{"dropout_p", 1.5}}), UsageError);
  EXPECT_NEAR(TrainConfig{}.max_logit_scale(), std::log(100.0), 1e-12);
}

}  // namespace
}  // namespace stratalign
