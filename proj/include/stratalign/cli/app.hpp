// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Subcommands: synth, train, sweep, eval, report, export. Every output is a
// pure function of the flags (no timestamps, sorted JSON keys), so repeated
// runs produce identical bytes.

#include <CLI11.hpp>

#include <Eigen/Core>
#include <boost/version.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stratalign/stratalign.hpp"

namespace stratalign::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

namespace fs = std::filesystem;
using nlohmann::json;

namespace detail {

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw DataError(DataErrorCode::missing, std::string(what) + " not found: " + path);
}

inline void require_dir(const std::string& path, const char* what) {
  if (!fs::is_directory(path)) throw DataError(DataErrorCode::missing, std::string(what) + " not found: " + path);
}

inline std::string absolute_path(const std::string& p) { return fs::weakly_canonical(fs::absolute(p)).string(); }

inline void write_text(const fs::path& path, std::string_view text) { neb1::write_file(path, text); }

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline json versions() {
  return {{"stratalign", kVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"boost", BOOST_LIB_VERSION},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

/// Provenance record: the verbatim flags plus anything derived from them.
inline json run_record(const std::string& subcommand, const std::vector<std::string>& args, json extra) {
  json r = {{"subcommand", subcommand}, {"flags", args}, {"versions", versions()}};
  if (extra.contains("config")) r["config_hash"] = hex64(fnv1a64(extra["config"].dump()));
  for (auto it = extra.begin(); it != extra.end(); ++it) r[it.key()] = it.value();
  return r;
}

inline std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  for (const auto& cell : stratalign::detail::split_csv_line(text)) out.push_back(stratalign::detail::parse_number(cell, what));
  return out;
}

inline std::vector<std::string> split_names(const std::string& text) {
  std::vector<std::string> out;
  for (auto& cell : stratalign::detail::split_csv_line(text))
    if (!cell.empty()) out.push_back(cell);
  return out;
}

/// Training flags shared by `train` and `sweep`. Flags override the config
/// file, which overrides built-in defaults.
struct TrainFlags {
  std::string config_path;
  double lr = 0, wd = 0, dropout = 0, temperature = 0, min_temperature = 0;
  std::size_t batch_size = 0, epochs = 0, dim = 0, shared_dim = 0, filters = 0;
  std::uint64_t seed = 0;
  std::string arch, projector, channels;
  bool zscore = false;
  std::vector<std::pair<std::string, CLI::Option*>> options;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "JSON train config");
    options = {
        {"learning_rate", app.add_option("--lr", lr, "Learning rate")},
        {"weight_decay", app.add_option("--wd", wd, "AdamW weight decay")},
        {"batch_size", app.add_option("--batch-size", batch_size, "Batch size")},
        {"epochs", app.add_option("--epochs", epochs, "Training epochs")},
        {"seed", app.add_option("--seed", seed, "Seed for init, shuffling and dropout")},
        {"encoder_dim", app.add_option("--dim", dim, "Encoder output width D")},
        {"shared_dim", app.add_option("--shared-dim", shared_dim, "Shared space width d_s")},
        {"dropout_p", app.add_option("--dropout", dropout, "Dropout probability")},
        {"init_temperature", app.add_option("--temperature", temperature, "Initial temperature")},
        {"min_temperature", app.add_option("--min-temperature", min_temperature, "Temperature floor")},
        {"arch", app.add_option("--arch", arch, "eegproject | tsconv")},
        {"projector", app.add_option("--projector", projector, "linear | identity")},
        {"tsconv_filters", app.add_option("--filters", filters, "TSConv filter count")},
        {"channels", app.add_option("--channels", channels, "Comma-separated channel keep-list")},
        {"zscore", app.add_flag("--zscore", zscore, "Z-score channels after averaging")},
    };
  }

  json overrides() const {
    json j = json::object();
    for (const auto& [key, opt] : options) {
      if (opt->count() == 0) continue;
      if (key == "learning_rate") j[key] = lr;
      else if (key == "weight_decay") j[key] = wd;
      else if (key == "batch_size") j[key] = batch_size;
      else if (key == "epochs") j[key] = epochs;
      else if (key == "seed") j[key] = seed;
      else if (key == "encoder_dim") j[key] = dim;
      else if (key == "shared_dim") j[key] = shared_dim;
      else if (key == "dropout_p") j[key] = dropout;
      else if (key == "init_temperature") j[key] = temperature;
      else if (key == "min_temperature") j[key] = min_temperature;
      else if (key == "arch") j[key] = arch;
      else if (key == "projector") j[key] = projector;
      else if (key == "tsconv_filters") j[key] = filters;
      else if (key == "channels") j[key] = split_names(channels);
      else if (key == "zscore") j[key] = zscore;
    }
    return j;
  }

  /// The identity projector needs D = D_l = d_s; widths not set explicitly
  /// follow the bank.
  TrainConfig resolve(std::size_t bank_dim) const {
    json merged = json::object();
    if (!config_path.empty()) {
      require_file(config_path, "config");
      try {
        merged = json::parse(neb1::read_file(config_path));
      } catch (const json::parse_error& e) {
        throw UsageError("config " + config_path + " is not valid JSON: " + e.what());
      }
      if (!merged.is_object()) throw UsageError("config must be a JSON object");
    }
    merged.update(overrides());
    TrainConfig cfg = apply_json(TrainConfig{}, merged);
    if (cfg.projector == ProjectorMode::identity) {
      if (!merged.contains("encoder_dim")) cfg.encoder_dim = bank_dim;
      if (!merged.contains("shared_dim")) cfg.shared_dim = bank_dim;
    }
    cfg.validate();
    return cfg;
  }
};

inline std::string default_subject(const PairManifest& m, const std::string& requested) {
  if (!requested.empty()) return requested;
  if (m.subjects.empty()) throw DataError(DataErrorCode::missing, "manifest lists no subjects");
  return m.subjects.front();
}

/// Header of a NEB1 file without validating the kind-specific fields.
inline json peek_header(const fs::path& path) {
  const std::string bytes = neb1::read_file(path);
  return neb1::decode(neb1::kBankMagic, bytes,
                      [](const json& h) { return h.at("count").get<std::size_t>() * h.at("dim").get<std::size_t>(); })
      .header;
}

/// Everything `eval` and `export` need, rebuilt from a checkpoint's data record.
struct RestoredRun {
  ModelCheckpoint checkpoint;
  PreparedSplits splits;
  EmbeddingBank bank;
  PairedSet test;
};

inline RestoredRun restore_run(const std::string& ckpt_path) {
  require_file(ckpt_path, "checkpoint");
  RestoredRun r;
  r.checkpoint = load_checkpoint(ckpt_path);
  const json& d = r.checkpoint.data;
  if (!d.contains("manifest") || !d.contains("bank"))
    throw DataError(DataErrorCode::missing, "checkpoint does not record its manifest and bank");
  const std::string manifest_path = d["manifest"].get<std::string>();
  const std::string bank_path = d["bank"].get<std::string>();
  require_file(manifest_path, "manifest");
  require_file(bank_path, "bank");
  const PairManifest manifest = load_manifest(manifest_path);
  r.bank = read_bank(bank_path);
  r.splits = prepare_splits(manifest, d.value("subject", manifest.subjects.at(0)), r.checkpoint.config);
  r.test = pair_with_bank(r.splits.test, r.bank);
  return r;
}

}  // namespace detail

// --- subcommands ------------------------------------------------------------

struct SynthFlags {
  SynthSpec spec;
  std::string out, alphas, betas, sigmas;
  std::size_t layers = 6;
};

inline int cmd_synth(const SynthFlags& f, const std::vector<std::string>& args) {
  SynthSpec spec = f.spec;
  spec.layers = default_schedule(f.layers);
  auto apply = [&](const std::string& text, double LayerSchedule::*field, const char* what) {
    if (text.empty()) return;
    const auto v = detail::parse_list(text, what);
    if (v.size() != spec.layers.size())
      throw UsageError(std::string("--") + what + " needs one value per layer (" + std::to_string(spec.layers.size()) + ")");
    for (std::size_t l = 0; l < v.size(); ++l) spec.layers[l].*field = v[l];
  };
  apply(f.alphas, &LayerSchedule::alpha, "alphas");
  apply(f.betas, &LayerSchedule::beta, "betas");
  apply(f.sigmas, &LayerSchedule::sigma, "sigmas");
  spec.validate();
  const SynthData data = synth_generate(spec);
  const fs::path out(f.out);
  save_manifest(data.manifest, out / "manifest.json");
  write_neural(data.recording, out / synth_neural_file());
  for (const auto& bank : data.banks) write_bank(bank, out / ("bank_L" + std::to_string(bank.layer_index) + ".neb"));
  json schedule = json::array();
  for (const auto& s : spec.layers) schedule.push_back({{"alpha", s.alpha}, {"beta", s.beta}, {"sigma", s.sigma}});
  detail::write_json(out / "run.json",
                     detail::run_record("synth", args,
                                        {{"seed", spec.seed},
                                         {"schedule", schedule},
                                         {"concepts", spec.num_concepts},
                                         {"test_concepts", spec.num_test_concepts},
                                         {"images_per_concept", spec.images_per_concept},
                                         {"dim", spec.dim},
                                         {"channels", spec.channels},
                                         {"times", spec.times},
                                         {"repetitions", spec.repetitions},
                                         {"neural_noise", spec.neural_noise}}));
  std::cout << "wrote " << data.banks.size() << " banks, " << data.manifest.images.size() << " images to " << out.string()
            << "\n";
  return kOk;
}

struct TrainCmdFlags {
  std::string manifest, bank, out, subject;
  int layer = 0;
  detail::TrainFlags train;
};

inline int cmd_train(const TrainCmdFlags& f, const std::vector<std::string>& args) {
  detail::require_file(f.manifest, "manifest");
  detail::require_file(f.bank, "bank");
  const PairManifest manifest = load_manifest(f.manifest);
  const EmbeddingBank bank = read_bank(f.bank);
  if (f.layer != 0 && f.layer != bank.layer_index)
    throw DataError(DataErrorCode::invalid, "--layer " + std::to_string(f.layer) + " but bank holds layer " +
                                                std::to_string(bank.layer_index));
  const TrainConfig cfg = f.train.resolve(bank.dim());
  const std::string subject = detail::default_subject(manifest, f.subject);
  const PreparedSplits splits = prepare_splits(manifest, subject, cfg);
  const PairedSet train = pair_with_bank(splits.train, bank);
  const PairedSet test = pair_with_bank(splits.test, bank);

  const fs::path out(f.out);
  FitCallbacks callbacks;
  callbacks.on_epoch = [](const EpochLog& log, const Model<float>&) {
    std::cout << "epoch " << log.epoch << " train_loss " << log.train_loss;
    if (log.test_loss) std::cout << " test_loss " << *log.test_loss;
    std::cout << " tau " << log.temperature << "\n";
  };
  FitResult result = fit(train, &test, cfg, callbacks);
  result.checkpoint.data = {{"manifest", detail::absolute_path(f.manifest)},
                            {"bank", detail::absolute_path(f.bank)},
                            {"subject", subject},
                            {"layer_index", bank.layer_index},
                            {"backbone", bank.backbone_name}};
  save_checkpoint(result.checkpoint, out / "checkpoint.nck");
  json losses = json::array();
  for (const auto& e : result.history) losses.push_back(to_json(e));
  detail::write_json(out / "losses.json", losses);
  detail::write_json(out / "run.json", detail::run_record("train", args,
                                                          {{"seed", cfg.seed},
                                                           {"config", to_json(cfg)},
                                                           {"layer_index", bank.layer_index},
                                                           {"train_pairs", train.size()},
                                                           {"test_pairs", test.size()}}));
  return kOk;
}

struct SweepFlags {
  std::string manifest, banks_dir, out, subject, layers;
  detail::TrainFlags train;
};

inline int cmd_sweep(const SweepFlags& f, const std::vector<std::string>& args) {
  detail::require_file(f.manifest, "manifest");
  detail::require_dir(f.banks_dir, "banks directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(f.banks_dir))
    if (e.is_regular_file() && e.path().extension() == ".neb") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<int> wanted;
  for (double v : f.layers.empty() ? std::vector<double>{} : detail::parse_list(f.layers, "layers"))
    wanted.push_back(static_cast<int>(v));
  std::vector<EmbeddingBank> banks;
  for (const auto& p : files) {
    if (detail::peek_header(p).value("kind", std::string("embedding")) != "embedding") continue;
    EmbeddingBank b = read_bank(p);
    if (wanted.empty() || std::find(wanted.begin(), wanted.end(), b.layer_index) != wanted.end())
      banks.push_back(std::move(b));
  }
  if (banks.empty()) throw DataError(DataErrorCode::missing, "no embedding banks in " + f.banks_dir);
  std::sort(banks.begin(), banks.end(), [](const auto& a, const auto& b) { return a.layer_index < b.layer_index; });
  for (std::size_t i = 1; i < banks.size(); ++i)
    if (banks[i].layer_index == banks[i - 1].layer_index)
      throw DataError(DataErrorCode::invalid, "two banks for layer " + std::to_string(banks[i].layer_index));

  const PairManifest manifest = load_manifest(f.manifest);
  const TrainConfig cfg = f.train.resolve(banks.front().dim());
  const std::string subject = detail::default_subject(manifest, f.subject);
  const PreparedSplits splits = prepare_splits(manifest, subject, cfg);
  const SweepResult sweep = layer_sweep(splits, banks, cfg, sweep_threads());

  const fs::path out(f.out);
  detail::write_json(out / "sweep.json", to_json(sweep));
  detail::write_text(out / "sweep_table.csv", sweep_table_csv(sweep));
  detail::write_json(out / "run.json",
                     detail::run_record("sweep", args, {{"seed", cfg.seed}, {"config", to_json(cfg)}, {"subject", subject}}));
  std::cout << sweep_table_csv(sweep);
  return kOk;
}

struct EvalFlags {
  std::string ckpt, metrics = "top1,top5,concept", out;
};

inline int cmd_eval(const EvalFlags& f, const std::vector<std::string>&) {
  const auto metrics = detail::split_names(f.metrics);
  for (const auto& m : metrics)
    if (m != "top1" && m != "top5" && m != "concept") throw UsageError("unknown metric '" + m + "'");
  if (metrics.empty()) throw UsageError("--metrics is empty");
  const detail::RestoredRun run = detail::restore_run(f.ckpt);
  RetrievalReport r = evaluate(run.checkpoint.model, run.test, run.splits.test_categories);
  r.subject_id = run.splits.test.subject_id;
  r.backbone = run.bank.backbone_name;
  r.layer_index = run.bank.layer_index;
  r.relative_depth = run.bank.relative_depth;
  json j = to_json(r);
  auto has = [&](const char* m) { return std::find(metrics.begin(), metrics.end(), m) != metrics.end(); };
  if (!has("top1")) j.erase("top1");
  if (!has("top5")) j.erase("top5");
  if (!has("concept")) j.erase("concept_accuracy");
  if (!f.out.empty()) detail::write_json(f.out, j);
  std::cout << j.dump(2) << "\n";
  return kOk;
}

struct ReportFlags {
  std::string results, out;
  bool regress = false;
};

inline int cmd_report(const ReportFlags& f, const std::vector<std::string>& args) {
  detail::require_file(f.results, "results");
  const std::string text = neb1::read_file(f.results);
  const bool is_json = fs::path(f.results).extension() == ".json";
  std::string table;
  std::optional<ScalingReport> scaling;
  if (is_json) {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw DataError(DataErrorCode::invalid, f.results + ": " + e.what());
    }
    if (f.regress) throw UsageError("--regress needs a per-backbone summary CSV, not a sweep result");
    table = sweep_table_csv(sweep_from_json(j));
  } else {
    const auto rows = parse_summary_csv(text);
    table = summary_table_csv(rows);
    if (f.regress) scaling = scaling_report(rows);
  }
  std::cout << table;
  if (scaling) std::cout << to_json(*scaling).dump(2) << "\n";
  if (!f.out.empty()) {
    const fs::path out(f.out);
    detail::write_text(out / "table.csv", table);
    if (scaling) detail::write_json(out / "regression.json", to_json(*scaling));
    detail::write_json(out / "run.json", detail::run_record("report", args, json::object()));
  }
  return kOk;
}

struct ExportFlags {
  std::string ckpt, out;
};

inline int cmd_export(const ExportFlags& f, const std::vector<std::string>&) {
  const detail::RestoredRun run = detail::restore_run(f.ckpt);
  export_embeddings(run.checkpoint.model, run.test, run.splits.test_concepts, f.out);
  std::cout << "wrote " << 2 * run.test.size() << " rows to " << f.out << "\n";
  return kOk;
}

inline int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::usage: return kUsage;
    case ErrorKind::data: return kData;
    case ErrorKind::numeric: return kNumeric;
  }
  return kData;
}

/// Entry point; returns the process exit code.
inline int run(int argc, char** argv) {
  CLI::App app{"stratalign: align neural recordings with layer-wise visual embeddings"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  const std::vector<std::string> args(argv + std::min(argc, 1), argv + argc);

  SynthFlags synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic manifest, neural recording and layer banks");
  s->add_option("--concepts", synth.spec.num_concepts, "Number of concepts")->capture_default_str();
  s->add_option("--test-concepts", synth.spec.num_test_concepts, "Held-out concepts")->capture_default_str();
  s->add_option("--images-per", synth.spec.images_per_concept, "Images per concept")->capture_default_str();
  s->add_option("--layers", synth.layers, "Simulated backbone depth")->capture_default_str();
  s->add_option("--seed", synth.spec.seed, "Generator seed")->capture_default_str();
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--alphas", synth.alphas, "Per-layer concept weights (comma list)");
  s->add_option("--betas", synth.betas, "Per-layer detail weights (comma list)");
  s->add_option("--sigmas", synth.sigmas, "Per-layer noise scales (comma list)");
  s->add_option("--dim", synth.spec.dim, "Embedding width")->capture_default_str();
  s->add_option("--channels", synth.spec.channels, "Neural channels")->capture_default_str();
  s->add_option("--times", synth.spec.times, "Time points per trial")->capture_default_str();
  s->add_option("--noise", synth.spec.neural_noise, "Neural sensor noise")->capture_default_str();
  s->add_option("--concept-weight", synth.spec.neural_concept_weight, "Concept signal in the neural data")
      ->capture_default_str();
  s->add_option("--detail-weight", synth.spec.neural_detail_weight, "Instance signal in the neural data")
      ->capture_default_str();
  s->add_option("--repetitions", synth.spec.repetitions, "Trials per image")->capture_default_str();

  TrainCmdFlags train;
  auto* t = app.add_subcommand("train", "Fit an encoder against one layer bank");
  t->add_option("--manifest", train.manifest, "Pair manifest JSON")->required();
  t->add_option("--bank", train.bank, "Embedding bank (NEB1)")->required();
  t->add_option("--layer", train.layer, "Expected layer index of the bank");
  t->add_option("--subject", train.subject, "Subject id (default: first in manifest)");
  t->add_option("--out", train.out, "Output directory")->required();
  train.train.attach(*t);

  SweepFlags sweep;
  auto* w = app.add_subcommand("sweep", "Fit and evaluate one model per layer bank");
  w->add_option("--manifest", sweep.manifest, "Pair manifest JSON")->required();
  w->add_option("--banks-dir", sweep.banks_dir, "Directory of NEB1 banks")->required();
  w->add_option("--out", sweep.out, "Output directory")->required();
  w->add_option("--subject", sweep.subject, "Subject id (default: first in manifest)");
  w->add_option("--layers", sweep.layers, "Comma list of layer indices to probe (default: all)");
  sweep.train.attach(*w);

  EvalFlags eval;
  auto* e = app.add_subcommand("eval", "Zero-shot retrieval metrics for a checkpoint");
  e->add_option("--ckpt", eval.ckpt, "Checkpoint from train")->required();
  e->add_option("--metrics", eval.metrics, "Comma list of top1, top5, concept")->capture_default_str();
  e->add_option("--out", eval.out, "Also write the report JSON here");

  ReportFlags report;
  auto* r = app.add_subcommand("report", "Tables and scaling regression from results");
  r->add_option("--results", report.results, "Backbone summary CSV or sweep.json")->required();
  r->add_flag("--regress", report.regress, "Regress accuracy on ln(params)");
  r->add_option("--out", report.out, "Output directory");

  ExportFlags exp;
  auto* x = app.add_subcommand("export", "Write projected test embeddings as CSV");
  x->add_option("--ckpt", exp.ckpt, "Checkpoint from train")->required();
  x->add_option("--out", exp.out, "CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }
  try {
    if (s->parsed()) return cmd_synth(synth, args);
    if (t->parsed()) return cmd_train(train, args);
    if (w->parsed()) return cmd_sweep(sweep, args);
    if (e->parsed()) return cmd_eval(eval, args);
    if (r->parsed()) return cmd_report(report, args);
    if (x->parsed()) return cmd_export(exp, args);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return exit_code_for(err);
  } catch (const nlohmann::json::exception& err) {
    std::cerr << "error: malformed JSON: " << err.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kData;
  }
  return kUsage;
}

}  // namespace stratalign::cli
