// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Malliavin calculus over finitely many Gaussian increments.
//
// Increment (k, i) of an N-step, m-noise grid is the expression variable
// k*m + i. Functionals are ordinary Exprs over those variables, so partial
// derivatives, Skorokhod integrals and refinements are graph transforms.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "malliavin/ensemble.hpp"
#include "malliavin/expr.hpp"
#include "malliavin/parser.hpp"
#include "malliavin/vfield.hpp"

namespace malliavin {

struct WienerGrid {
  std::vector<double> dt;
  int m = 1;

  std::size_t steps() const { return dt.size(); }
  std::size_t symbols() const { return dt.size() * static_cast<std::size_t>(m); }
  int var(std::size_t k, int i = 0) const { return static_cast<int>(k) * m + i; }
  double variance(int var) const { return dt[static_cast<std::size_t>(var / m)]; }
  friend bool operator==(const WienerGrid&, const WienerGrid&) = default;
};

WienerGrid uniform_wiener_grid(std::size_t steps, double horizon = 1.0, int m = 1);

struct WienerFunctional {
  Expr expr;
  WienerGrid grid;

  double operator()(std::span<const double> w) const { return evaluate(expr, w); }
  bool is_polynomial() const { return polynomial_degree(expr).has_value(); }
};

// Integrands F_{k,i}, indexed like the increment variables.
using Integrand = std::vector<WienerFunctional>;

WienerFunctional increment(const WienerGrid& grid, std::size_t k, int i = 0);

// d/d(dw_{k,i}).
WienerFunctional malliavin_partial(const WienerFunctional& f, std::size_t k, int i = 0);

// sum F_{k,i} dw_{k,i} - sum d_{k,i} F_{k,i} dt_k.
WienerFunctional skorokhod(const Integrand& f);

// Symbols w1..wN (m = 1) or w<k>_<i> (1-based) for m > 1.
SymbolResolver increment_symbols(const WienerGrid& grid);
WienerFunctional parse_functional(std::string_view text, const WienerGrid& grid);
std::string format_functional(const WienerFunctional& f);

// Sparse polynomial in the increment variables.
class Polynomial {
 public:
  using Exponents = std::vector<std::uint8_t>;  // one entry per variable

  Polynomial() = default;
  explicit Polynomial(std::size_t variables) : vars_(variables) {}

  // Throws InputError on a transcendental node or when the degree exceeds max_degree.
  static Polynomial expand(const Expr& e, std::size_t variables, int max_degree = kMaxWickDegree);

  std::size_t variables() const { return vars_; }
  const std::map<Exponents, double>& terms() const { return terms_; }
  int degree() const;
  void add(const Exponents& e, double c);

  Polynomial operator+(const Polynomial& o) const;
  Polynomial operator*(const Polynomial& o) const;
  Polynomial scaled(double s) const;

  static constexpr int kMaxWickDegree = 12;

 private:
  std::size_t vars_ = 0;
  std::map<Exponents, double> terms_;
};

// E[prod_v dw_v^{p_v}] = prod (p_v - 1)!! dt_v^{p_v / 2}, zero if any p_v is odd.
double gaussian_moment(const Polynomial::Exponents& e, const WienerGrid& grid);

// Same moment by explicit enumeration of Isserlis pairings; independent
// cross-check, exponential cost, degree <= 12.
double isserlis_moment(const Polynomial::Exponents& e, const WienerGrid& grid);

// Exact expectation of a polynomial functional.
double wick_expectation(const WienerFunctional& f);
double wick_expectation(const Polynomial& p, const WienerGrid& grid);
// E[a b] without forming the product.
double wick_inner(const Polynomial& a, const Polynomial& b, const WienerGrid& grid);

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
  std::size_t nonfinite = 0;
};

inline constexpr double kMaxNonfiniteRate = 1e-3;

// Sample mean under the grid law with the counter-based sampler. Aborts when
// more than 0.1% of evaluations are non-finite.
McEstimate mc_expectation(const WienerFunctional& f, std::size_t samples, std::uint64_t seed,
                          const EnsembleOptions& opt = {});

struct IbpResult {
  double lhs = 0.0;  // E[sum d_k G F_k dt_k]
  double rhs = 0.0;  // E[G skorokhod(F)]
  double residual = 0.0;
  double std_error = 0.0;  // zero on the exact route
  bool exact = true;
};

IbpResult check_ibp(const WienerFunctional& g, const Integrand& f);
IbpResult check_ibp_mc(const WienerFunctional& g, const Integrand& f, std::size_t samples, std::uint64_t seed,
                       const EnsembleOptions& opt = {});

struct IsometryResult {
  double lhs = 0.0;    // E[skorokhod(F)^2]
  double rhs = 0.0;    // E[sum F^2 dt] + E[sum d_k F_l d_l F_k dt_k dt_l]
  double residual = 0.0;
  double bound = 0.0;  // E[sum F^2 dt] + E[sum (d_k F_l)^2 dt_k dt_l]
  // Residual if the cross term is read as d_k F_l d_k F_l.
  double displayed_form_residual = 0.0;
};

IsometryResult check_isometry(const Integrand& f);

// The L2 monitor E[skorokhod(F)^2] <= E[sum F^2 dt] + E[sum |dF|^2 dt dt] by Monte Carlo.
struct MonitorResult {
  McEstimate lhs;
  McEstimate bound;
  double slack = 0.0;  // bound - lhs
  double slack_stderr = 0.0;
};
MonitorResult skorokhod_moment_monitor(const Integrand& f, std::size_t samples, std::uint64_t seed,
                                       const EnsembleOptions& opt = {});

// Splits step `split` (0-based) into fractions (frac, 1 - frac) of its length;
// dw_k -> dw_k^- + dw_k^+, later steps shift by one.
struct Refinement {
  WienerGrid grid;
  std::size_t split = 0;
  double fraction = 0.5;

  // Variable of the refined grid that corresponds to old variable `var`
  // (for the split step, the "-" half).
  int map_var(int var, bool plus_half = false) const;
};

Refinement make_refinement(const WienerGrid& grid, std::size_t split, double fraction = 0.5);
WienerFunctional refine(const WienerFunctional& f, const Refinement& r);
// Componentwise refinement of an integrand: both halves of the split step
// receive the refined F_k.
Integrand refine(const Integrand& f, const Refinement& r);

// Residuals between d_k(skorokhod(F)) and F_k + skorokhod(d_k F) at sample points.
double dint_identity_check(const Integrand& f, std::size_t k, int i, const std::vector<std::vector<double>>& points);

// M_ij(w) = sum_k d_k X_i d_k X_j dt_k.
class DiscreteMalliavinMatrix {
 public:
  explicit DiscreteMalliavinMatrix(const std::vector<WienerFunctional>& x);
  Mat operator()(std::span<const double> w) const;

 private:
  WienerGrid grid_;
  std::size_t n_;
  Tape tape_;  // all partials, row-major (component, symbol)
};

}  // namespace malliavin
