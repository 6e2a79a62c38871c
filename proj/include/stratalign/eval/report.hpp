// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Tables over backbones (one row per model, best vs final-output accuracy)
// and over the layers of a single sweep. Percentages print with one decimal.

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stratalign/data/bank.hpp"
#include "stratalign/eval/regression.hpp"
#include "stratalign/eval/sweep.hpp"

namespace stratalign {

struct BackboneSummary {
  std::string model;
  double params = 0.0;  // parameter count
  int num_layers = 0;
  int best_layer = 0;
  double best_acc = 0.0;   // percent
  double final_acc = 0.0;  // percent

  double relative_depth_percent() const { return 100.0 * stratalign::relative_depth(best_layer, num_layers); }
  double delta() const { return best_acc - final_acc; }
};

inline std::string format_fixed1(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

inline std::string format_signed1(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%+.1f", v);
  return buf;
}

/// "38M", "1.14B", "632e6" or a plain number.
inline double parse_param_count(const std::string& text) {
  std::string s = text;
  double scale = 1.0;
  if (!s.empty()) {
    switch (std::toupper(static_cast<unsigned char>(s.back()))) {
      case 'K': scale = 1e3; break;
      case 'M': scale = 1e6; break;
      case 'B': scale = 1e9; break;
      default: break;
    }
    if (scale != 1.0) s.pop_back();
  }
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !(v > 0))
    throw DataError(DataErrorCode::invalid, "bad parameter count '" + text + "'");
  return v * scale;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_number(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw DataError(DataErrorCode::invalid, "bad " + what + " '" + s + "'");
  return v;
}

}  // namespace detail

/// CSV with header model,params,num_layers,best_layer,best_acc,final_acc
/// (any column order; '#' lines and blank lines skipped).
inline std::vector<BackboneSummary> parse_summary_csv(const std::string& text) {
  static const std::vector<std::string> kColumns = {"model", "params", "num_layers", "best_layer", "best_acc", "final_acc"};
  std::stringstream in(text);
  std::string line;
  std::vector<int> col(kColumns.size(), -1);
  bool have_header = false;
  std::vector<BackboneSummary> rows;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
    const auto cells = detail::split_csv_line(line);
    if (!have_header) {
      for (std::size_t c = 0; c < cells.size(); ++c)
        for (std::size_t k = 0; k < kColumns.size(); ++k)
          if (cells[c] == kColumns[k]) col[k] = static_cast<int>(c);
      for (std::size_t k = 0; k < kColumns.size(); ++k)
        if (col[k] < 0) throw DataError(DataErrorCode::invalid, "summary CSV lacks column '" + kColumns[k] + "'");
      have_header = true;
      continue;
    }
    auto cell = [&](std::size_t k) -> const std::string& {
      if (static_cast<std::size_t>(col[k]) >= cells.size())
        throw DataError(DataErrorCode::truncated, "summary CSV line " + std::to_string(line_no) + " is short");
      return cells[static_cast<std::size_t>(col[k])];
    };
    BackboneSummary r;
    r.model = cell(0);
    r.params = parse_param_count(cell(1));
    r.num_layers = static_cast<int>(detail::parse_number(cell(2), "num_layers"));
    r.best_layer = static_cast<int>(detail::parse_number(cell(3), "best_layer"));
    r.best_acc = detail::parse_number(cell(4), "best_acc");
    r.final_acc = detail::parse_number(cell(5), "final_acc");
    if (r.num_layers < 2 || r.best_layer < 1 || r.best_layer > r.num_layers)
      throw DataError(DataErrorCode::invalid, "summary CSV line " + std::to_string(line_no) + ": layer out of range");
    rows.push_back(std::move(r));
  }
  if (!have_header) throw DataError(DataErrorCode::invalid, "summary CSV is empty");
  return rows;
}

inline std::string summary_table_csv(const std::vector<BackboneSummary>& rows) {
  std::string out = "model,params,num_layers,best_layer,relative_depth,best_acc,final_acc,delta\n";
  char params[64];
  for (const auto& r : rows) {
    std::snprintf(params, sizeof params, "%.6g", r.params);
    out += r.model + "," + params + "," + std::to_string(r.num_layers) + "," + std::to_string(r.best_layer) + "," +
           format_fixed1(r.relative_depth_percent()) + "," + format_fixed1(r.best_acc) + "," +
           format_fixed1(r.final_acc) + "," + format_signed1(r.delta()) + "\n";
  }
  return out;
}

/// Per-layer table of one sweep; accuracies as percentages.
inline std::string sweep_table_csv(const SweepResult& s) {
  std::string out = "layer,relative_depth,top1,top5,concept_accuracy,delta_to_final\n";
  for (const auto& r : s.reports)
    out += std::to_string(r.layer_index) + "," + format_fixed1(100.0 * r.relative_depth) + "," +
           format_fixed1(100.0 * r.top1) + "," + format_fixed1(100.0 * r.top5) + "," +
           format_fixed1(100.0 * r.concept_accuracy) + "," + format_signed1(100.0 * (r.top1 - s.final_top1)) + "\n";
  return out;
}

/// Accuracy vs ln(params) for the best-layer and final-output columns.
struct ScalingReport {
  RegressionResult best_layer;
  RegressionResult final_output;
};

inline ScalingReport scaling_report(const std::vector<BackboneSummary>& rows) {
  std::vector<std::pair<double, double>> best, fin;
  for (const auto& r : rows) {
    best.emplace_back(r.params, r.best_acc);
    fin.emplace_back(r.params, r.final_acc);
  }
  return {scaling_regression(best), scaling_regression(fin)};
}

inline nlohmann::json to_json(const ScalingReport& s) {
  return {{"x", "ln(params)"}, {"y", "accuracy_percent"}, {"best_layer", to_json(s.best_layer)},
          {"final_output", to_json(s.final_output)}};
}

}  // namespace stratalign
