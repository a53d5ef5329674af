// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
#include "malliavin/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/binomial.hpp>

#include "malliavin/errors.hpp"

namespace malliavin {

std::pair<double, double> clopper_pearson(std::size_t k, std::size_t n, double confidence) {
  if (k > n) throw InputError("more successes than trials");
  if (!(confidence > 0.0 && confidence < 1.0)) throw InputError("confidence must lie in (0, 1)");
  if (n == 0) return {0.0, 1.0};
  using boost::math::binomial_distribution;
  const double alpha = 1.0 - confidence;
  const auto nn = static_cast<double>(n);
  const auto kk = static_cast<double>(k);
  const double lo = k == 0 ? 0.0 : binomial_distribution<>::find_lower_bound_on_p(nn, kk, alpha / 2);
  const double hi = k == n ? 1.0 : binomial_distribution<>::find_upper_bound_on_p(nn, kk, alpha / 2);
  return {lo, hi};
}

LineFit ols(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("line fit needs two or more points");
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw InputError("line fit needs two distinct abscissae");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (x.size() > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = y[i] - f.intercept - f.slope * x[i];
      rss += e * e;
    }
    f.slope_stderr = std::sqrt(rss / static_cast<double>(x.size() - 2) / sxx);
  }
  return f;
}

MeanError mean_error(const std::vector<double>& x) {
  MeanError r;
  r.count = x.size();
  if (x.empty()) return r;
  r.mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  if (x.size() > 1) {
    double ss = 0.0;
    for (double v : x) ss += (v - r.mean) * (v - r.mean);
    r.std_error = std::sqrt(ss / static_cast<double>(x.size() - 1) / static_cast<double>(x.size()));
  }
  return r;
}

double quantile(std::vector<double> x, double q) {
  if (x.empty()) throw InputError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw InputError("quantile level must lie in [0, 1]");
  std::sort(x.begin(), x.end());
  const double pos = q * static_cast<double>(x.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= x.size()) return x.back();
  return x[i] + (pos - static_cast<double>(i)) * (x[i + 1] - x[i]);
}

double silverman_bandwidth(const std::vector<double>& x) {
  if (x.size() < 2) throw InputError("bandwidth needs at least two samples");
  const double sd = mean_error(x).std_error * std::sqrt(static_cast<double>(x.size()));
  const double iqr = quantile(x, 0.75) - quantile(x, 0.25);
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  if (!(spread > 0.0)) throw InputError("bandwidth of a constant sample");
  return 0.9 * spread * std::pow(static_cast<double>(x.size()), -0.2);
}

}  // namespace malliavin
