// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
#include "malliavin/discrete_corpus.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "malliavin/errors.hpp"
#include "malliavin/rng.hpp"

namespace malliavin {

void CorpusReport::record(const CorpusRow& row, std::size_t evaluations) {
  double& w = worst[row.identity];
  w = std::max(w, std::abs(row.residual));
  checks[row.identity] += evaluations;
  rows.push_back(row);
}

std::vector<WienerGrid> default_corpus_grids() {
  const std::vector<std::vector<double>> steps = {{0.7}, {0.3, 0.45}, {0.3, 0.5, 0.2}};
  std::vector<WienerGrid> out;
  for (int m = 1; m <= 2; ++m) {
    for (const auto& dt : steps) out.push_back(WienerGrid{dt, m});
  }
  return out;
}

std::vector<WienerFunctional> monomial_corpus(const WienerGrid& grid, int max_degree) {
  const auto s = grid.symbols();
  std::vector<WienerFunctional> out;
  std::vector<int> e(s, 0);
  auto rec = [&](auto&& self, std::size_t v, int left) -> void {
    if (v == s) {
      std::vector<Expr> f;
      for (std::size_t u = 0; u < s; ++u) {
        if (e[u]) f.push_back(pow(Expr::variable(static_cast<int>(u)), e[u]));
      }
      out.push_back({product(std::move(f)), grid});
      return;
    }
    for (int p = 0; p <= left; ++p) {
      e[v] = p;
      self(self, v + 1, left - p);
    }
    e[v] = 0;
  };
  rec(rec, 0, max_degree);
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string grid_tag(const WienerGrid& g) {
  return "N" + std::to_string(g.steps()) + "m" + std::to_string(g.m);
}

std::string slot_name(const WienerGrid& g, int var) {
  const int k = var / g.m + 1;
  return g.m == 1 ? "w" + std::to_string(k) : "w" + std::to_string(k) + "_" + std::to_string(var % g.m + 1);
}

Integrand single_slot(const WienerFunctional& p, int slot) {
  Integrand f(p.grid.symbols(), WienerFunctional{Expr::constant(0.0), p.grid});
  f[static_cast<std::size_t>(slot)] = p;
  return f;
}

double max_coefficient_gap(const Polynomial& a, const Polynomial& b) {
  const Polynomial d = a + b.scaled(-1.0);
  double w = 0.0;
  for (const auto& [e, c] : d.terms()) w = std::max(w, std::abs(c));
  return w;
}

// One corpus element: integrand P e_a with its expanded pieces.
struct Element {
  std::string id;
  int slot = 0;
  Polynomial p;
  std::vector<Polynomial> dp;  // d_v P
  Polynomial delta;            // skorokhod(P e_a)
};

}  // namespace

CorpusReport run_exact_corpus(const std::vector<WienerGrid>& grids, int max_degree) {
  const auto t0 = Clock::now();
  CorpusReport rep;
  rep.min_slack = std::numeric_limits<double>::infinity();
  for (const auto& grid : grids) {
    const std::size_t s = grid.symbols();
    const std::string tag = grid_tag(grid);
    const auto monos = monomial_corpus(grid, max_degree);
    std::vector<Polynomial> mono_poly;
    std::vector<std::vector<Polynomial>> mono_dp;
    for (const auto& q : monos) {
      mono_poly.push_back(Polynomial::expand(q.expr, s));
      std::vector<Polynomial> d;
      for (std::size_t v = 0; v < s; ++v) {
        d.push_back(Polynomial::expand(malliavin_partial(q, v / grid.m, static_cast<int>(v) % grid.m).expr, s));
      }
      mono_dp.push_back(std::move(d));
    }

    std::vector<Element> elems;
    for (int a = 0; a < static_cast<int>(s); ++a) {
      for (std::size_t q = 0; q < monos.size(); ++q) {
        Element el;
        el.id = tag + ":F_" + slot_name(grid, a) + "=" + format_functional(monos[q]);
        el.slot = a;
        el.p = mono_poly[q];
        el.dp = mono_dp[q];
        el.delta = Polynomial::expand(skorokhod(single_slot(monos[q], a)).expr, s);
        elems.push_back(std::move(el));
      }
    }

    // IBP: every monomial G against every element; one row per element.
    for (const auto& el : elems) {
      CorpusRow worst{el.id, "ibp", "wick"};
      const double dta = grid.variance(el.slot);
      for (std::size_t q = 0; q < monos.size(); ++q) {
        const double lhs = dta * wick_inner(mono_dp[q][static_cast<std::size_t>(el.slot)], el.p, grid);
        const double rhs = wick_inner(mono_poly[q], el.delta, grid);
        if (std::abs(lhs - rhs) >= std::abs(worst.residual)) {
          worst.lhs = lhs;
          worst.rhs = rhs;
          worst.residual = lhs - rhs;
        }
      }
      rep.record(worst, monos.size());
    }

    // Isometry, diagonal through the library routine.
    std::vector<double> slack_diag;
    for (std::size_t i = 0; i < elems.size(); ++i) {
      const auto& el = elems[i];
      const auto f = single_slot(monos[i % monos.size()], el.slot);
      const auto iso = check_isometry(f);
      rep.record({el.id, "isometry", "wick", iso.lhs, iso.rhs, iso.residual, 0.0});
      slack_diag.push_back(iso.bound - iso.lhs);
      rep.min_slack = std::min(rep.min_slack, iso.bound - iso.lhs);
      if (std::abs(iso.displayed_form_residual) > 1e-12) ++rep.displayed_form_mismatches;
    }

    // Off-diagonal pairs by polarization; also the inequality on F +/- F'.
    for (std::size_t i = 0; i < elems.size(); ++i) {
      const auto& a = elems[i];
      CorpusRow worst{a.id, "isometry_pairs", "wick"};
      const double dta = grid.variance(a.slot);
      for (std::size_t j = i + 1; j < elems.size(); ++j) {
        const auto& b = elems[j];
        const double dtb = grid.variance(b.slot);
        const double lhs = wick_inner(a.delta, b.delta, grid);
        double diag = 0.0;
        double square = 0.0;
        if (a.slot == b.slot) {
          diag = dta * wick_inner(a.p, b.p, grid);
          for (std::size_t k = 0; k < s; ++k) {
            if (a.dp[k].terms().empty() || b.dp[k].terms().empty()) continue;
            square += grid.variance(static_cast<int>(k)) * dta * wick_inner(a.dp[k], b.dp[k], grid);
          }
        }
        const auto& dab = a.dp[static_cast<std::size_t>(b.slot)];
        const auto& dba = b.dp[static_cast<std::size_t>(a.slot)];
        const double cross = dab.terms().empty() || dba.terms().empty() ? 0.0 : dta * dtb * wick_inner(dab, dba, grid);
        const double rhs = diag + cross;
        if (std::abs(lhs - rhs) >= std::abs(worst.residual)) {
          worst.lhs = lhs;
          worst.rhs = rhs;
          worst.residual = lhs - rhs;
        }
        const double mixed = diag + square - lhs;
        rep.min_slack = std::min(rep.min_slack, slack_diag[i] + slack_diag[j] - 2.0 * std::abs(mixed));
      }
      rep.record(worst, elems.size() - i - 1);
    }

    // d_k skorokhod(F) = F_k + skorokhod(d_k F), compared coefficientwise.
    for (std::size_t i = 0; i < elems.size(); ++i) {
      const auto& el = elems[i];
      const auto f = single_slot(monos[i % monos.size()], el.slot);
      const auto delta = skorokhod(f);
      CorpusRow worst{el.id, "dint", "wick"};
      for (std::size_t v = 0; v < s; ++v) {
        const auto k = v / static_cast<std::size_t>(grid.m);
        const int c = static_cast<int>(v) % grid.m;
        Integrand df;
        for (const auto& x : f) df.push_back(malliavin_partial(x, k, c));
        const Polynomial lhs = Polynomial::expand(malliavin_partial(delta, k, c).expr, s);
        const Polynomial rhs = Polynomial::expand(f[v].expr + skorokhod(df).expr, s);
        const double gap = max_coefficient_gap(lhs, rhs);
        if (gap >= std::abs(worst.residual)) {
          worst.lhs = wick_inner(lhs, lhs, grid);
          worst.rhs = wick_inner(rhs, rhs, grid);
          worst.residual = gap;
        }
      }
      rep.record(worst, s);
    }
  }
  rep.seconds = seconds_since(t0);
  return rep;
}

namespace {

std::vector<std::vector<double>> random_points(const WienerGrid& g, std::size_t count, std::uint64_t seed,
                                               std::uint64_t stream) {
  std::vector<std::vector<double>> pts(count, std::vector<double>(g.symbols()));
  for (std::size_t p = 0; p < count; ++p) {
    for (std::size_t v = 0; v < g.symbols(); ++v) {
      pts[p][v] = std::sqrt(g.variance(static_cast<int>(v))) *
                  standard_normal(seed, stream, p, static_cast<std::uint32_t>(v));
    }
  }
  return pts;
}

// Max |a - b| over points, with the tape built once.
double pointwise_gap(const Expr& a, const Expr& b, const std::vector<std::vector<double>>& pts) {
  std::vector<Expr> outs{a, b};
  Tape tape(outs);
  std::vector<double> scratch;
  double out[2];
  double w = 0.0;
  for (const auto& p : pts) {
    tape.evaluate(p, out, scratch);
    w = std::max(w, std::abs(out[0] - out[1]));
  }
  return w;
}

}  // namespace

CorpusReport run_refinement_corpus(const std::vector<WienerGrid>& grids, int max_degree, std::size_t points,
                                   std::uint64_t seed, double fraction) {
  const auto t0 = Clock::now();
  CorpusReport rep;
  std::uint64_t stream = 0;
  for (const auto& grid : grids) {
    const std::string tag = grid_tag(grid);
    const auto monos = monomial_corpus(grid, max_degree);
    for (std::size_t split = 0; split < grid.steps(); ++split) {
      const Refinement r = make_refinement(grid, split, fraction);
      const auto pts = random_points(r.grid, points, seed, stream++);
      const std::string stag = tag + "/split" + std::to_string(split + 1) + ":";
      for (const auto& g : monos) {
        const std::string id = stag + format_functional(g);
        const WienerFunctional rg = refine(g, r);
        // Derivative: d_{k+-} refine(G) = refine(d_k G).
        double gap = 0.0;
        for (int v = 0; v < static_cast<int>(grid.symbols()); ++v) {
          const Expr coarse = refine(malliavin_partial(g, v / grid.m, v % grid.m), r).expr;
          gap = std::max(gap, pointwise_gap(derivative(rg.expr, r.map_var(v, false)), coarse, pts));
          if (static_cast<std::size_t>(v / grid.m) == split) {
            gap = std::max(gap, pointwise_gap(derivative(rg.expr, r.map_var(v, true)), coarse, pts));
          }
        }
        rep.record({id, "refine_derivative", "points", 0.0, 0.0, gap, 0.0}, points);

        const double e0 = wick_expectation(g);
        const double e1 = wick_expectation(rg);
        rep.record({id, "refine_expectation", "wick", e0, e1, e0 - e1, 0.0});

        for (int a = 0; a < static_cast<int>(grid.symbols()); ++a) {
          const Integrand f = single_slot(g, a);
          const Expr lhs = refine(skorokhod(f), r).expr;
          const Expr rhs = skorokhod(refine(f, r)).expr;
          rep.record({id + "@" + slot_name(grid, a), "refine_skorokhod", "points", 0.0, 0.0,
                      pointwise_gap(lhs, rhs, pts), 0.0},
                     points);
        }
      }
    }
  }
  rep.seconds = seconds_since(t0);
  return rep;
}

std::vector<WienerFunctional> parse_mc_corpus(std::string_view text) {
  std::vector<WienerFunctional> out;
  WienerGrid grid = uniform_wiener_grid(1);
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    line = line.substr(first);
    if (line.rfind("grid", 0) == 0) {
      std::istringstream g(line.substr(4));
      std::size_t n = 0;
      int m = 0;
      if (!(g >> n >> m) || n == 0 || m < 1) {
        throw InputError("corpus line " + std::to_string(lineno) + ": expected 'grid N m [dt...]'");
      }
      std::vector<double> dt;
      double d;
      while (g >> d) dt.push_back(d);
      if (dt.empty()) {
        grid = uniform_wiener_grid(n, 1.0, m);
      } else if (dt.size() != n) {
        throw InputError("corpus line " + std::to_string(lineno) + ": " + std::to_string(dt.size()) +
                         " step sizes for " + std::to_string(n) + " steps");
      } else {
        grid = WienerGrid{dt, m};
        for (double x : dt) {
          if (!(x > 0.0)) throw InputError("corpus line " + std::to_string(lineno) + ": step sizes must be positive");
        }
      }
      continue;
    }
    try {
      out.push_back(parse_functional(line, grid));
    } catch (const ParseError& e) {
      throw InputError("corpus line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

CorpusReport run_mc_corpus(const std::vector<WienerFunctional>& corpus, std::size_t samples, std::uint64_t seed,
                           const EnsembleOptions& opt) {
  const auto t0 = Clock::now();
  CorpusReport rep;
  rep.min_slack = std::numeric_limits<double>::infinity();
  std::uint64_t stream = seed;
  for (const auto& x : corpus) {
    const std::string id = grid_tag(x.grid) + ":" + format_functional(x);
    const std::size_t s = x.grid.symbols();
    Integrand ones(s, WienerFunctional{Expr::constant(1.0), x.grid});
    Integrand incs;
    for (std::size_t v = 0; v < s; ++v) incs.push_back({Expr::variable(static_cast<int>(v)), x.grid});
    Integrand same(s, x);
    const bool poly = x.is_polynomial();

    for (const auto* f : {&ones, &incs}) {
      const std::string which = f == &ones ? "ibp_F=1" : "ibp_F=dw";
      if (poly) {
        const auto r = check_ibp(x, *f);
        rep.record({id, which, "wick", r.lhs, r.rhs, r.residual, 0.0});
      } else {
        const auto r = check_ibp_mc(x, *f, samples, stream++, opt);
        rep.record({id, which, "mc", r.lhs, r.rhs, r.residual, r.std_error}, samples);
      }
    }
    if (poly) {
      const auto r = check_isometry(same);
      rep.record({id, "isometry", "wick", r.lhs, r.rhs, r.residual, 0.0});
      rep.min_slack = std::min(rep.min_slack, r.bound - r.lhs);
    } else {
      const auto r = skorokhod_moment_monitor(same, samples, stream++, opt);
      rep.record({id, "moment_monitor", "mc", r.lhs.mean, r.bound.mean, r.slack, r.slack_stderr}, samples);
      rep.min_slack = std::min(rep.min_slack, r.slack);
    }
  }
  rep.seconds = seconds_since(t0);
  return rep;
}

}  // namespace malliavin
