// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Interpolation inequality for sampled functions, almost-implication
// statistics for Z processes, and the bracket cascade under small <eta, C eta>.
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "malliavin/ensemble.hpp"
#include "malliavin/sde.hpp"

namespace malliavin {

inline constexpr double kDefaultHolderAlpha = 1.0 / 3.0;
// Grids above this many intervals use a strided pair subset.
inline constexpr std::size_t kHolderAllPairsLimit = 4096;

struct HoelderProfile {
  std::vector<double> values;  // f(i / N), i = 0..N
  double alpha = kDefaultHolderAlpha;
  double sup = 0.0;
  double holder = 0.0;
  std::size_t stride = 1;  // 1 when every pair was examined

  static HoelderProfile compute(std::vector<double> values, double alpha = kDefaultHolderAlpha);
};

struct DtfResult {
  double lhs = 0.0;  // sup |f'|
  double rhs = 0.0;
  double slack = 0.0;
  double sup = 0.0;
  double derivative_holder = 0.0;
};

// values and derivative sampled on the same uniform grid of [0, 1].
DtfResult check_dtf(const std::vector<double>& values, const std::vector<double>& derivative,
                    double alpha = kDefaultHolderAlpha);

struct DtfFunction {
  std::string name;
  std::function<double(double)> f;
  std::function<double(double)> df;
};

// Sample f and f' at N + 1 uniform points.
std::pair<std::vector<double>, std::vector<double>> sample_function(const DtfFunction& fn, std::size_t intervals);

// 200 functions: polynomials, trigonometric sweeps, cubic B-spline smoothings of Brownian paths.
std::vector<DtfFunction> dtf_corpus(std::uint64_t seed);

// Sup norms of one path: Z, its drift A and the largest diffusion coefficient B_k.
struct PathSups {
  double z = 0.0;
  double a = 0.0;
  double b = 0.0;
};

struct ImplicationBin {
  double epsilon = 0.0;
  std::size_t paths = 0;
  std::size_t count_a = 0;  // ||Z|| < eps
  std::size_t count_b = 0;  // ||A|| < eps^r and ||B|| < eps^r
  std::size_t count_a_not_b = 0;
  double p_a = 0.0;
  double p_violation = 0.0;
  double p_lo = 0.0;  // Clopper-Pearson band on p_violation
  double p_hi = 0.0;
  bool censored = true;  // fewer than min_conditioning paths in A
};

enum class DecayStatus { Fitted, NoViolations, Censored };
const char* decay_status_name(DecayStatus s);

struct AlmostImplicationStats {
  double r = 0.0;
  std::vector<ImplicationBin> bins;  // ascending epsilon
  DecayStatus status = DecayStatus::Censored;
  double slope = std::numeric_limits<double>::quiet_NaN();  // of log P(A and not B) against log eps
  double slope_stderr = std::numeric_limits<double>::quiet_NaN();
  std::size_t fit_bins = 0;
  double resolvable_lo = std::numeric_limits<double>::quiet_NaN();  // smallest uncensored epsilon
  double resolvable_hi = std::numeric_limits<double>::quiet_NaN();
};

struct ImplicationOptions {
  std::vector<double> epsilons;
  std::vector<double> r_grid{1.0 / 80, 1.0 / 20, 1.0 / 8, 1.0 / 5};
  std::size_t min_conditioning = 10;
  double confidence = 0.95;
};

// Event tables from per-path sup norms; one entry per r.
std::vector<AlmostImplicationStats> implication_tables(const std::vector<PathSups>& sups,
                                                       const ImplicationOptions& opt);

struct NorrisOptions {
  ImplicationOptions events;
  std::optional<Vec> eta;  // unit; random per path when empty
  GridSpec grid;
  std::size_t paths = 1000;
  std::uint64_t seed = 0;
  EnsembleOptions exec;
};

struct NorrisResult {
  std::vector<AlmostImplicationStats> tables;
  std::vector<PathSups> sups;  // path order, excluded paths dropped
  std::size_t excluded = 0;
  // max over paths and steps of the one-step trapezoid reconstruction error of Z_F
  double reconstruction_error = 0.0;
  double z_scale = 0.0;  // max over paths of ||Z_F||
};

// A = Z_{[V0,F]} + 1/2 sum_k Z_{[Vk,[Vk,F]]}, B_k = Z_{[Vk,F]}.
NorrisResult norris_scaling(const SdeSystem& system, const Vec& x0, const VectorField& f, const NorrisOptions& opt);

// Largest one-step error of
//   Z_F(k+1) ~ Z_F(k) + (S(k) + S(k+1)) dt / 2 + sum_i (B_i(k) + B_i(k+1)) dw_i / 2,
// S = Z_{[V0,F]}, along one flow.
double z_reconstruction_error(const FlowPath& flow, const SdeSystem& system, const IncrementGrid& incs,
                              const Vec& eta, const VectorField& f);

struct CascadeRow {
  int generation = 0;
  std::string label;
  bool zero = false;  // identically zero bracket
  std::size_t conditioned = 0;
  double q10 = std::numeric_limits<double>::quiet_NaN();
  double median = std::numeric_limits<double>::quiet_NaN();
  double q90 = std::numeric_limits<double>::quiet_NaN();
  double unconditioned_median = std::numeric_limits<double>::quiet_NaN();
};

struct CascadeTable {
  double epsilon = 0.0;
  std::size_t paths = 0;
  std::size_t excluded = 0;
  std::size_t conditioned = 0;  // paths with <eta, C eta> < epsilon
  double p_hat = 0.0;
  double p_lo = 0.0;
  double p_hi = 0.0;
  bool censored = true;  // conditioning event empty
  std::vector<CascadeRow> rows;
};

struct CascadeOptions {
  int levels = 1;
  double epsilon = 0.25;
  std::optional<Vec> eta;  // unit; random per path when empty
  GridSpec grid;
  std::size_t paths = 1000;
  std::uint64_t seed = 0;
  double confidence = 0.95;
  EnsembleOptions exec;
};

CascadeTable hormander_cascade(const SdeSystem& system, const Vec& x0, const CascadeOptions& opt);

}  // namespace malliavin
