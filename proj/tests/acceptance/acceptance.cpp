// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "../common/oracles.hpp"
#include "../common/test_util.hpp"

namespace stratalign {
namespace {

namespace fs = std::filesystem;
using testing::max_gradient_error;
using testing::probe;
using testing::random_tensor;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

int g_failures = 0;

void criterion(const std::string& name, double time_limit_s, const std::function<void(Outcome&)>& body) {
  Outcome out;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(out);
  } catch (const std::exception& e) {
    out.pass = false;
    out.detail << "[exception: " << e.what() << "] ";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (time_limit_s > 0 && secs >= time_limit_s) {
    out.pass = false;
    out.detail << "[over time limit " << time_limit_s << " s] ";
  }
  if (!out.pass) ++g_failures;
  char timing[32];
  std::snprintf(timing, sizeof timing, "%.1f s", secs);
  std::cout << (out.pass ? "PASS " : "FAIL ") << name << " | " << out.detail.str() << "(" << timing << ")" << std::endl;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(STRATALIGN_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// --- Gradient integrity -------------------------------------------------------------

constexpr std::size_t kM = 4, kC = 4, kT = 8, kD = 16, kShared = 8, kImage = 12;

double tensor_op_gradients() {
  Rng rng(101);
  double worst = 0;
  auto x = random_tensor({kM, kD}, rng, 2.0);
  const auto r = random_tensor({kM, kD}, rng);
  worst = std::max(worst, max_gradient_error(x, gelu_backward(x, r), [&] { return probe(gelu(x), r); }));

  auto gamma = random_tensor({kD}, rng), beta = random_tensor({kD}, rng);
  LayerNormCache<double> ln;
  layer_norm(x, gamma, beta, kLayerNormEps, &ln);
  const auto lg = layer_norm_backward(ln, gamma, r);
  auto lf = [&] { return probe(layer_norm(x, gamma, beta, kLayerNormEps), r); };
  worst = std::max({worst, max_gradient_error(x, lg.input, lf), max_gradient_error(gamma, lg.gamma, lf),
                    max_gradient_error(beta, lg.beta, lf)});

  std::vector<double> norms;
  const auto y = l2_normalize(x, &norms);
  worst = std::max(worst, max_gradient_error(x, l2_normalize_backward(y, norms, r), [&] { return probe(l2_normalize(x), r); }));

  auto img = random_tensor({kM, 1, kC, kT}, rng);
  auto k = random_tensor({3, 1, 1, 3}, rng), b = random_tensor({3}, rng);
  const auto cr = random_tensor({kM, 3, kC, kT - 2}, rng);
  const auto cg = conv2d_backward(img, k, cr);
  auto cf = [&] { return probe(conv2d(img, k, b), cr); };
  worst = std::max({worst, max_gradient_error(img, cg.input, cf), max_gradient_error(k, cg.kernel, cf),
                    max_gradient_error(b, cg.bias, cf)});

  const Pool2d pool{1, 3, 1, 2};
  const auto pr = random_tensor({kM, 1, kC, pooled_length(kT, 3, 2)}, rng);
  worst = std::max(worst, max_gradient_error(img, avgpool2d_backward(img.shape(), pool, pr),
                                             [&] { return probe(avgpool2d(img, pool), pr); }));
  return worst;
}

EncoderDims tiny_dims(Arch arch) {
  EncoderDims d;
  d.arch = arch;
  d.channels = kC;
  d.times = kT;
  d.dim = kD;
  d.dropout_p = 0.3;
  d.filters = 3;
  d.temporal_kernel = 3;
  d.pool_window = 3;
  d.pool_stride = 2;
  return d;
}

double encoder_gradients(Arch arch, Mode mode) {
  Rng init(102);
  EncoderParams<double> params = init_params<double>(tiny_dims(arch), init);
  visit_params(params, [&](const std::string&, Tensor<double>& t, bool) { t = random_tensor(t.shape(), init, 0.5); });
  auto x = random_tensor({kM, kC, kT}, init);
  const auto r = random_tensor({kM, kD}, init);
  const Rng dropout(7);
  auto forward = [&] {
    Rng rng = dropout;
    return probe(encoder_forward(params, x, mode, &rng), r);
  };
  Rng rng = dropout;
  EncoderCache<double> cache;
  encoder_forward(params, x, mode, &rng, cache);
  EncoderParams<double> grads = params;
  const auto dx = encoder_backward(params, cache, r, grads);
  std::vector<Tensor<double>*> g;
  visit_params(grads, [&](const std::string&, Tensor<double>& t, bool) { g.push_back(&t); });
  double worst = max_gradient_error(x, dx, forward);
  std::size_t i = 0;
  visit_params(params, [&](const std::string&, Tensor<double>& t, bool) {
    worst = std::max(worst, max_gradient_error(t, *g[i++], forward));
  });
  return worst;
}

double end_to_end_gradients(Arch arch) {
  Rng init(103);
  Model<double> model;
  model.encoder = init_params<double>(tiny_dims(arch), init);
  model.projector = init_projector<double>(ProjectorMode::linear, kD, kImage, kShared, init);
  model.projector.b_neural = random_tensor({kShared}, init, 0.3);
  model.projector.b_image = random_tensor({kShared}, init, 0.3);
  model.logit_scale[0] = std::log(1 / 0.3);
  const auto neural = random_tensor({kM, kC, kT}, init);
  const auto targets = random_tensor({kM, kImage}, init);
  const Rng dropout(8);
  Model<double> grads = zeros_like(model);
  Rng rng = dropout;
  loss_and_gradients(model, neural, targets, Mode::train, &rng, grads);
  auto f = [&] {
    Rng r = dropout;
    EncoderCache<double> cache;
    const auto z = encoder_forward(model.encoder, neural, Mode::train, &r, cache);
    const auto p = project(model.projector, z, targets);
    return contrastive_loss(p.v, p.w, model.temperature(), false).loss;
  };
  auto params = model.parameters();
  auto g = grads.parameters();
  double worst = 0;
  for (std::size_t i = 0; i < params.size(); ++i) worst = std::max(worst, max_gradient_error(*params[i].value, *g[i].value, f));
  return worst;
}

double loss_gradients() {
  Rng rng(104);
  auto v = random_tensor({kM, kShared}, rng), w = random_tensor({kM, kShared}, rng);
  const double tau = 0.2;
  const auto r = contrastive_loss(v, w, tau);
  auto f = [&] { return contrastive_loss(v, w, tau, false).loss; };
  const double h = 1e-6;
  const double dtau = (contrastive_loss(v, w, tau + h, false).loss - contrastive_loss(v, w, tau - h, false).loss) / (2 * h);
  const double tau_err = std::abs(dtau - r.grad_temperature) / std::max({std::abs(dtau), std::abs(r.grad_temperature), 1e-3});
  return std::max({max_gradient_error(v, r.grad_v, f), max_gradient_error(w, r.grad_w, f), tau_err});
}

void gradient_integrity(Outcome& out) {
  const std::vector<std::pair<std::string, double>> parts = {
      {"tensor ops", tensor_op_gradients()},
      {"eegproject train", encoder_gradients(Arch::eegproject, Mode::train)},
      {"eegproject eval", encoder_gradients(Arch::eegproject, Mode::eval)},
      {"tsconv train", encoder_gradients(Arch::tsconv, Mode::train)},
      {"tsconv eval", encoder_gradients(Arch::tsconv, Mode::eval)},
      {"loss incl. tau", loss_gradients()},
      {"end-to-end eegproject", end_to_end_gradients(Arch::eegproject)},
      {"end-to-end tsconv", end_to_end_gradients(Arch::tsconv)},
  };
  double worst = 0;
  for (const auto& [name, err] : parts) {
    out.require(err < 1e-5, name + " rel err " + fmt(err));
    worst = std::max(worst, err);
  }
  out.detail << "max rel err " << fmt(worst) << " over " << parts.size() << " groups ";
}

// --- Loss fixtures ------------------------------------------------------------------

void closed_form_losses(Outcome& out) {
  Rng rng(201);
  for (int t = 0; t < 10; ++t) {
    out.require(contrastive_loss(random_tensor({1, 7}, rng), random_tensor({1, 7}, rng), 0.07).loss == 0.0, "M=1 double");
    out.require(contrastive_loss(rng_normal<float>({1, 7}, rng), rng_normal<float>({1, 7}, rng), 0.07f).loss == 0.0,
                "M=1 float");
  }
  for (std::size_t m : {2u, 8u, 100u}) {
    const Tensor<double> u({m, 5}, 1.0);
    out.require(std::abs(contrastive_loss(u, u, 0.07).loss - std::log(double(m))) < 1e-6, "uniform ln M, M=" + std::to_string(m));
  }
  const auto eye = Tensor<double>::matrix({{1, 0}, {0, 1}});
  const double l2 = contrastive_loss(eye, eye, 1.0).loss;
  out.require(std::abs(l2 - 0.313262) < 1e-6, "M=2 identity");
  out.detail << "M=2 identity loss " << fmt(l2) << " ";
}

void symmetry_and_invariance(Outcome& out) {
  Rng rng(301);
  double worst_perm = 0, worst_scale = 0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t m = 2 + rng.below(30), d = 2 + rng.below(16);
    const auto vf = rng_normal<float>({m, d}, rng), wf = rng_normal<float>({m, d}, rng);
    const auto a = contrastive_loss(vf, wf, 0.07f), b = contrastive_loss(wf, vf, 0.07f);
    out.require(a.loss == b.loss && a.grad_v == b.grad_w && a.grad_w == b.grad_v, "modality swap");
    const auto v = random_tensor({m, d}, rng), w = random_tensor({m, d}, rng);
    const double base = contrastive_loss(v, w, 0.1).loss;
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    worst_perm = std::max(worst_perm, std::abs(contrastive_loss(gather_rows(v, perm), gather_rows(w, perm), 0.1).loss - base));
    auto vs = v, ws = w;
    for (std::size_t i = 0; i < m; ++i) {
      const double sa = 0.01 + 100 * rng.uniform(), sb = 0.01 + 100 * rng.uniform();
      for (std::size_t j = 0; j < d; ++j) {
        vs.at(i, j) *= sa;
        ws.at(i, j) *= sb;
      }
    }
    worst_scale = std::max(worst_scale, std::abs(contrastive_loss(vs, ws, 0.1).loss - base));
  }
  out.require(worst_perm < 1e-10, "row permutation");
  out.require(worst_scale < 1e-5, "row rescaling");
  out.detail << "perm diff " << fmt(worst_perm) << ", rescale diff " << fmt(worst_scale) << " ";
}

double adamw_once(double theta, double g, double lr, double wd, bool decay) {
  Tensor<double> p({1}, theta), grad({1}, g);
  std::vector<ParamRef<double>> params = {{"p", &p, decay}};
  std::vector<const Tensor<double>*> grads = {&grad};
  AdamWState<double> state;
  adamw_step<double>(params, grads, state, lr, wd);
  return p[0];
}

void optimizer_fixtures(Outcome& out) {
  const double a = adamw_once(1.0, 1.0, 0.1, 0.0, true), b = adamw_once(1.0, 1.0, 0.1, 0.1, true);
  out.require(std::abs(a - 0.9) < 1e-6, "plain step 0.9");
  out.require(std::abs(b - 0.89) < 1e-6, "decayed step 0.89");
  out.require(std::abs(adamw_once(2.0, 0.0, 0.1, 0.5, true) - 1.9) < 1e-12, "wd-only step");
  out.require(adamw_once(2.0, 0.0, 0.1, 0.5, false) == 2.0, "no decay on excluded params");
  out.detail << "steps " << a << ", " << b << " ";
}

// --- Retrieval oracle ------------------------------------------------------------------

void retrieval_oracle(Outcome& out) {
  Rng rng(401);
  const std::vector<std::string> labels = {"animals", "food", "tools", "vehicles", "others"};
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t dim = 3 + rng.below(14);
    const auto q = random_tensor({50, dim}, rng);
    auto c = random_tensor({50, dim}, rng);
    if (trial % 4 == 0)  // exact duplicates exercise lowest-index tie-breaking
      for (std::size_t j = 1; j < 50; j += 7)
        for (std::size_t k = 0; k < dim; ++k) c.at(j, k) = c.at(j - 1, k);
    std::vector<std::size_t> truth(50);
    std::vector<std::string> cats(50);
    for (auto& t : truth) t = rng.below(50);
    for (auto& s : cats) s = labels[rng.below(labels.size())];

    const Rankings got = retrieve_topk(q, c, 5);
    std::size_t h1 = 0, h5 = 0, concept_hits = 0;
    for (std::size_t i = 0; i < 50; ++i) {
      const auto full = testing::oracle_ranking(q, i, c);
      if (!std::equal(got[i].begin(), got[i].end(), full.begin())) ++mismatches;
      h1 += full[0] == truth[i];
      h5 += std::find(full.begin(), full.begin() + 5, truth[i]) != full.begin() + 5;
      for (std::size_t k = 0; k < 5; ++k) concept_hits += full[k] != truth[i] && cats[full[k]] == cats[truth[i]];
    }
    if (topk_accuracy(got, truth, 1) != h1 / 50.0 || topk_accuracy(got, truth, 5) != h5 / 50.0 ||
        concept_accuracy(got, cats, truth) != concept_hits / 250.0)
      ++mismatches;
  }
  out.require(mismatches == 0, std::to_string(mismatches) + " mismatching rankings or accuracies");
  out.detail << "100 instances of 50x50, " << mismatches << " mismatches ";
}

// --- Training runs ------------------------------------------------------------------------

PairedSet split_pairs(const SynthData& data, const std::string& split, std::size_t layer, std::vector<std::string>* cats) {
  const auto ids = data.manifest.image_ids(split);
  const NeuralDataset neural = subset(data.averaged, ids);
  if (cats) {
    const auto all = data.manifest.image_categories();
    for (const auto& id : neural.image_ids) cats->push_back(all.at(id));
  }
  return pair_with_bank(neural, data.banks[layer - 1]);
}

void overfit_sanity(Outcome& out) {
  SynthSpec spec;
  spec.num_concepts = 80;
  spec.num_test_concepts = 16;
  spec.images_per_concept = 1;
  spec.seed = 11;
  const auto data = synth_generate(spec);
  std::vector<std::string> cats;
  const PairedSet train = split_pairs(data, "train", 3, &cats);
  out.require(train.size() == 64, "64 pairs");
  TrainConfig cfg;
  cfg.epochs = 500;  // one optimizer step per epoch at the default batch size
  const auto result = fit(train, nullptr, cfg);
  const auto report = evaluate(result.checkpoint.model, train, cats);
  const double loss = result.history.back().train_loss;
  out.require(report.top1 == 1.0, "train Top-1 " + fmt(100 * report.top1) + "%");
  out.require(loss < 0.05, "final loss " + fmt(loss));
  out.detail << "steps " << result.checkpoint.optimizer.step << ", train Top-1 " << 100 * report.top1 << "%, final loss "
             << fmt(loss) << " ";
}

void inverted_u(Outcome& out) {
  double gap_sum = 0;
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  for (const auto seed : seeds) {
    SynthSpec spec;
    spec.seed = seed;
    const auto data = synth_generate(spec);
    PreparedSplits splits;
    splits.train = subset(data.averaged, data.manifest.image_ids("train"));
    splits.test = subset(data.averaged, data.manifest.image_ids("test"));
    const auto cats = data.manifest.image_categories();
    const auto concepts = data.manifest.image_concepts();
    for (const auto& id : splits.test.image_ids) {
      splits.test_categories.push_back(cats.at(id));
      splits.test_concepts.push_back(concepts.at(id));
    }
    TrainConfig cfg;
    cfg.encoder_dim = cfg.shared_dim = 256;
    cfg.epochs = 10;
    cfg.seed = seed;
    const SweepResult sweep = layer_sweep(splits, data.banks, cfg, sweep_threads());
    double best_mid = 0;
    out.detail << "seed " << seed << " Top-1 [";
    for (const auto& r : sweep.reports) {
      out.detail << (r.layer_index > 1 ? " " : "") << fmt(100 * r.top1);
      if (r.layer_index > 1 && r.layer_index < 6) best_mid = std::max(best_mid, r.top1);
    }
    out.detail << "] ";
    out.require(sweep.best_layer != 1 && sweep.best_layer != 6, "seed " + std::to_string(seed) + " best layer " +
                                                                    std::to_string(sweep.best_layer));
    gap_sum += 100 * (best_mid - sweep.final_top1);
  }
  const double gap = gap_sum / seeds.size();
  out.require(gap >= 15.0, "mean gap below 15 points");
  out.detail << "mean best-intermediate minus final " << fmt(gap) << " points ";
}

// --- Fixture arithmetic --------------------------------------------------------------------

const std::string kSummaryCsv = std::string(STRATALIGN_TEST_DATA) + "/backbone_layer_summary.csv";

void summary_table(Outcome& out) {
  const fs::path dir = testing::scratch_dir("acceptance_report");
  out.require(run_cli("report --results " + kSummaryCsv + " --out " + dir.string()) == 0, "report exit code");
  std::istringstream table(slurp(dir / "table.csv"));
  std::string line;
  std::getline(table, line);
  const auto header = stratalign::detail::split_csv_line(line);
  const auto col = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  };
  const std::vector<std::string> depth = {"66.7", "66.7", "45.5", "32.3", "38.5", "55.3", "54.0", "60.0"};
  const std::vector<std::string> delta = {"+27.4", "+22.7", "+31.5", "+43.3", "+58.4", "+42.0", "+41.1", "+26.7"};
  std::size_t row = 0, matched = 0;
  while (std::getline(table, line)) {
    const auto cells = stratalign::detail::split_csv_line(line);
    if (row < depth.size() && cells.at(col("relative_depth")) == depth[row] && cells.at(col("delta")) == delta[row]) ++matched;
    ++row;
  }
  out.require(row == 8 && matched == 8, std::to_string(matched) + "/8 rows match");
  out.detail << matched << "/8 rows reproduce depth and delta ";
}

void scaling_regression_check(Outcome& out) {
  const auto rows = parse_summary_csv(slurp(kSummaryCsv));
  std::vector<double> x, best, fin;
  for (const auto& r : rows) {
    x.push_back(std::log(r.params));
    best.push_back(r.best_acc);
    fin.push_back(r.final_acc);
  }
  const ScalingReport rep = scaling_report(rows);
  const auto ob = testing::oracle_ols(x, best), of = testing::oracle_ols(x, fin);
  auto close = [](double a, double b) { return std::abs(a - b) < 1e-6; };
  for (const auto& [got, want, name] : {std::tuple{rep.best_layer, ob, "best"}, std::tuple{rep.final_output, of, "final"}}) {
    out.require(close(got.slope, want.slope) && close(got.r_squared, want.r2) && close(got.p_value, want.p),
                std::string(name) + " column disagrees with oracle");
  }
  out.require(rep.best_layer.slope > 0 && rep.best_layer.p_value < 0.01, "best-layer slope significance");
  out.require(rep.final_output.p_value > 0.05, "final-output not significant");
  out.detail << "best slope " << fmt(rep.best_layer.slope) << " p " << fmt(rep.best_layer.p_value) << ", final p "
             << fmt(rep.final_output.p_value) << " ";
}

// --- CLI determinism ---------------------------------------------------------------------

void cli_determinism(Outcome& out) {
  const fs::path root = testing::scratch_dir("acceptance_cli");
  const fs::path d = root / "run";
  const std::string manifest = (d / "data" / "manifest.json").string();
  const std::string fast = " --dim 32 --shared-dim 16 --epochs 3 --batch-size 64";
  const std::vector<std::string> commands = {
      "synth --seed 9 --concepts 60 --test-concepts 12 --images-per 3 --layers 4 --dim 16 --channels 6 --times 16 --out " +
          (d / "data").string(),
      "train --manifest " + manifest + " --bank " + (d / "data" / "bank_L2.neb").string() + " --out " + (d / "train").string() +
          fast,
      "eval --ckpt " + (d / "train" / "checkpoint.nck").string() + " --out " + (d / "eval.json").string(),
      "export --ckpt " + (d / "train" / "checkpoint.nck").string() + " --out " + (d / "emb.csv").string(),
      "sweep --manifest " + manifest + " --banks-dir " + (d / "data").string() + " --out " + (d / "sweep").string() + fast,
      "report --regress --results " + kSummaryCsv + " --out " + (d / "report").string(),
  };
  const std::vector<std::string> files = {"data/manifest.json",   "data/neural_sub-01.neb", "data/bank_L1.neb",
                                          "data/bank_L4.neb",     "data/run.json",          "train/checkpoint.nck",
                                          "train/losses.json",    "train/run.json",         "eval.json",
                                          "emb.csv",              "sweep/sweep.json",       "sweep/sweep_table.csv",
                                          "report/table.csv",     "report/regression.json"};
  std::vector<std::string> first;
  for (int pass = 0; pass < 2; ++pass) {
    fs::remove_all(d);
    for (const auto& c : commands) out.require(run_cli(c) == 0, c.substr(0, c.find(' ')) + " exit code");
    for (const auto& f : files) {
      if (pass == 0) first.push_back(slurp(d / f));
    }
  }
  std::size_t same = 0;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const bool eq = slurp(d / files[i]) == first[i];
    out.require(eq, files[i] + " differs");
    same += eq;
  }
  out.detail << same << "/" << files.size() << " artifacts byte-identical across repeated runs ";
}

}  // namespace
}  // namespace stratalign

int main() {
  using namespace stratalign;
  criterion("gradient_integrity", 60, gradient_integrity);
  criterion("closed_form_losses", 0, closed_form_losses);
  criterion("loss_symmetry_invariance", 0, symmetry_and_invariance);
  criterion("optimizer_fixtures", 0, optimizer_fixtures);
  criterion("retrieval_oracle_equivalence", 0, retrieval_oracle);
  criterion("overfit_sanity", 60, overfit_sanity);
  criterion("inverted_u_reproduction", 300, inverted_u);
  criterion("summary_table_arithmetic", 0, summary_table);
  criterion("scaling_regression", 0, scaling_regression_check);
  criterion("cli_determinism", 0, cli_determinism);
  std::cout << (g_failures == 0 ? "ALL PASS" : std::to_string(g_failures) + " FAILED") << std::endl;
  return g_failures == 0 ? 0 : 1;
}
