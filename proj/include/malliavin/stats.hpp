// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace malliavin {

// Two-sided Clopper-Pearson interval for k successes in n trials.
std::pair<double, double> clopper_pearson(std::size_t k, std::size_t n, double confidence = 0.95);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;  // zero with two points
};

// Ordinary least squares y = intercept + slope x; needs two distinct x.
LineFit ols(const std::vector<double>& x, const std::vector<double>& y);

struct MeanError {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;
};

// Two-pass mean and standard error of the mean, in input order.
MeanError mean_error(const std::vector<double>& x);

// Empirical quantile by linear interpolation between order statistics.
double quantile(std::vector<double> x, double q);

// 0.9 min(sd, IQR / 1.34) n^(-1/5).
double silverman_bandwidth(const std::vector<double>& x);

}  // namespace malliavin
