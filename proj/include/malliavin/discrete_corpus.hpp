// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exhaustive checks of the discrete identities over monomial corpora.
//
// All identities are linear (IBP) or bilinear (isometry) in the integrand, so
// the corpus uses single-slot integrands F = P e_a with P a monomial; general
// polynomial integrands follow by linearity and polarization.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "malliavin/dmall.hpp"
#include "malliavin/ensemble.hpp"

namespace malliavin {

struct CorpusRow {
  std::string id;
  std::string identity;
  std::string route;  // "wick", "points" or "mc"
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;
  double std_error = 0.0;
};

struct CorpusReport {
  std::vector<CorpusRow> rows;
  std::map<std::string, double> worst;        // identity -> max |residual|
  std::map<std::string, std::size_t> checks;  // identity -> number of evaluations
  double min_slack = 0.0;                     // isometry inequality
  std::size_t displayed_form_mismatches = 0;  // elements where d_k F_l d_k F_l differs
  double seconds = 0.0;

  void record(const CorpusRow& row, std::size_t evaluations = 1);
};

// N in {1, 2, 3}, m in {1, 2}, non-uniform steps.
std::vector<WienerGrid> default_corpus_grids();

// All monomials of total degree <= max_degree in the grid's increments.
std::vector<WienerFunctional> monomial_corpus(const WienerGrid& grid, int max_degree);

// IBP, isometry (equality and inequality) and the derivative-of-Skorokhod
// identity, all through the Wick oracle.
CorpusReport run_exact_corpus(const std::vector<WienerGrid>& grids, int max_degree = 4);

// Derivative and Skorokhod graphs against mesh splitting, at random points;
// expectation preservation through the Wick oracle.
CorpusReport run_refinement_corpus(const std::vector<WienerGrid>& grids, int max_degree, std::size_t points,
                                   std::uint64_t seed, double fraction = 0.37);

// Text corpus for the Monte Carlo route. Lines:
//   grid N m [dt_1 ... dt_N]     switches the grid for following lines
//   <functional>                 in w1..wN (or w<k>_<i>) symbols
// Blank lines and lines starting with '#' are skipped.
std::vector<WienerFunctional> parse_mc_corpus(std::string_view text);

// Per functional X: IBP with G = X against F = 1 and F_k = dw_k, and the
// moment monitor with F_k = X.
CorpusReport run_mc_corpus(const std::vector<WienerFunctional>& corpus, std::size_t samples, std::uint64_t seed,
                           const EnsembleOptions& opt = {});

}  // namespace malliavin
