// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include <boost/math/special_functions/beta.hpp>
#include <nlohmann/json.hpp>

#include "stratalign/core/error.hpp"

namespace stratalign {

struct RegressionResult {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double p_value = 1.0;  // two-sided, H0: slope = 0
  double t_statistic = 0.0;
  double slope_stderr = 0.0;
  std::size_t n = 0;
};

inline nlohmann::json to_json(const RegressionResult& r) {
  return {{"slope", r.slope},          {"intercept", r.intercept},     {"r_squared", r.r_squared},
          {"p_value", r.p_value},      {"t_statistic", r.t_statistic}, {"slope_stderr", r.slope_stderr},
          {"n", r.n}};
}

/// P(|T| > |t|) for Student's t with `dof` degrees of freedom:
/// I_{dof/(dof+t²)}(dof/2, 1/2).
inline double student_t_two_sided_p(double t, double dof) {
  if (!(dof > 0)) throw UsageError("student_t: degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  return boost::math::ibeta(dof / 2.0, 0.5, dof / (dof + t * t));
}

/// Ordinary least squares y = intercept + slope·x with a slope t-test.
inline RegressionResult ordinary_least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw UsageError("regression: x and y lengths differ");
  const std::size_t n = x.size();
  if (n < 3) throw UsageError("regression: need at least 3 points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0)) throw UsageError("regression: degenerate x (all values equal)");
  RegressionResult r;
  r.n = n;
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  double ssr = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - (r.intercept + r.slope * x[i]);
    ssr += e * e;
  }
  r.r_squared = syy > 0 ? std::clamp(1.0 - ssr / syy, 0.0, 1.0) : 1.0;
  const double dof = static_cast<double>(n - 2);
  r.slope_stderr = std::sqrt(ssr / dof / sxx);
  if (r.slope_stderr > 0) {
    r.t_statistic = r.slope / r.slope_stderr;
    r.p_value = student_t_two_sided_p(r.t_statistic, dof);
  } else {
    // Exact fit: infinite t unless the slope is itself zero.
    r.t_statistic = r.slope == 0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), r.slope);
    r.p_value = r.slope == 0 ? 1.0 : 0.0;
  }
  // Keep p inside (0, 1] even when it underflows.
  r.p_value = std::clamp(r.p_value, std::numeric_limits<double>::min(), 1.0);
  return r;
}

/// Accuracy regressed on ln(parameter count).
inline RegressionResult scaling_regression(std::span<const std::pair<double, double>> points) {
  std::vector<double> x, y;
  for (const auto& [params, acc] : points) {
    if (!(params > 0)) throw UsageError("scaling_regression: parameter counts must be positive");
    x.push_back(std::log(params));
    y.push_back(acc);
  }
  return ordinary_least_squares(x, y);
}

}  // namespace stratalign
