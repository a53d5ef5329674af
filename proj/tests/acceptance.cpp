// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one line per criterion with its verdict, wall time and
// budget. A criterion passes only when its checks hold and it finishes within
// the budget. Arguments select criteria by number; no arguments runs all.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <fmt/format.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "commands.hpp"
#include "malliavin/calibration.hpp"
#include "malliavin/discrete_corpus.hpp"
#include "malliavin/io.hpp"
#include "malliavin/mmatrix.hpp"
#include "malliavin/norris.hpp"
#include "malliavin/parser.hpp"
#include "malliavin/scenarios.hpp"
#include "malliavin/stats.hpp"
#include "malliavin/vfield.hpp"

using namespace malliavin;

namespace {

constexpr std::uint64_t kSeed = calibration::kSeed;

// Tolerances.
constexpr double kExactTol = 1e-12;
constexpr double kBracketTol = 1e-9;
constexpr double kQuadraticFormTol = 1e-10;
constexpr double kRatioTarget = 2.0;
constexpr double kRatioWidth = 0.3;
constexpr double kMaxStdErrors = 3.0;
constexpr double kControlFinalShare = 0.25;
constexpr double kKdeMassOutside = 1e-3;

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond) ok = false;
    if (!detail.empty()) detail += "; ";
    detail += (cond ? "" : "FAILED ") + what;
  }
  void note(const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

struct Criterion {
  int id;
  const char* title;
  double budget;  // seconds; 0 means none
  std::function<Outcome()> run;
};

bool within_ratio(double r) { return std::abs(r - kRatioTarget) <= kRatioWidth; }

// ---------------------------------------------------------------- 1, 2

Outcome exact_identities() {
  Outcome o;
  const auto grids = default_corpus_grids();
  std::size_t max_steps = 0;
  int max_m = 0;
  for (const auto& g : grids) {
    max_steps = std::max(max_steps, g.steps());
    max_m = std::max(max_m, g.m);
  }
  const auto rep = run_exact_corpus(grids, 4);
  for (const char* id : {"ibp", "isometry", "isometry_pairs", "dint"}) {
    const auto it = rep.worst.find(id);
    if (it == rep.worst.end()) {
      o.require(false, fmt::format("{} missing from the corpus", id));
      continue;
    }
    o.require(it->second <= kExactTol, fmt::format("{} worst {:.2e} over {} checks", id, it->second,
                                                   rep.checks.at(id)));
  }
  o.require(rep.min_slack >= -kExactTol, fmt::format("inequality slack {:.2e}", rep.min_slack));
  o.note(fmt::format("{} grids, N <= {}, m <= {}, degree 4", grids.size(), max_steps, max_m));
  return o;
}

Outcome refinement_invariance() {
  Outcome o;
  const auto rep = run_refinement_corpus(default_corpus_grids(), 4, 100, kSeed);
  for (const auto& [id, w] : rep.worst) {
    o.require(w <= kExactTol, fmt::format("{} worst {:.2e} over {} checks", id, w, rep.checks.at(id)));
  }
  return o;
}

// ---------------------------------------------------------------- 3

// The Heun step differs from J V by the second-order term |dw_s|^2 / 2, so
// the h in the tolerance is read as the realized scale max(h, |dw_s|^2).
// Exceedances of the literal 10 (h + bump^2) are counted and printed.
Outcome derivative_identity() {
  Outcome o;
  const double h = 1e-3, bump = 1e-4;
  const std::size_t steps = 1000, paths = 100;
  struct PathGap {
    double worst = 0.0;     // max gap / realized tolerance
    double worst_gap = 0.0;
    std::size_t strict = 0;  // pairs above 10 (h + bump^2)
  };
  for (const char* name : {"brownian", "geometric", "langevin"}) {
    const auto sc = make_scenario(name);
    const int m = sc.system.noise_count();
    const GridSpec spec{1.0, steps, m, {}};
    const auto gaps = map_paths<PathGap>(paths, [&](std::size_t p) {
      const auto incs = sample_increments(spec, kSeed, p);
      const auto flow = integrate(sc.system, sc.x0, incs);
      PathGap g;
      for (std::size_t s = 0; s < steps; ++s) {
        double dw2 = 0.0;
        for (int j = 0; j < m; ++j) dw2 += incs.w(s, j) * incs.w(s, j);
        const double tol = 10.0 * (std::max(h, dw2) + bump * bump);
        for (int j = 1; j <= m; ++j) {
          const Vec a = malliavin_derivative_path(flow, sc.system, s, j);
          const Vec b = bump_derivative(sc.system, sc.x0, incs, s, j, bump);
          const double gap = (a - b).norm() / std::max(b.norm(), 1e-300);
          g.worst = std::max(g.worst, gap / tol);
          g.worst_gap = std::max(g.worst_gap, gap);
          g.strict += gap > 10.0 * (h + bump * bump);
        }
      }
      return g;
    });
    PathGap all;
    for (const auto& g : gaps.values) {
      if (!g) {
        all.worst = INFINITY;
        continue;
      }
      all.worst = std::max(all.worst, g->worst);
      all.worst_gap = std::max(all.worst_gap, g->worst_gap);
      all.strict += g->strict;
    }
    o.require(all.worst <= 1.0, fmt::format("{} worst gap {:.2e} ({:.2f} of tolerance, {} of {} pairs above 10 h)",
                                            name, all.worst_gap, all.worst, all.strict, steps * paths * m));
  }
  o.note(fmt::format("every step, {} paths", paths));
  return o;
}

// ---------------------------------------------------------------- 4

Outcome sde_oracles() {
  Outcome o;
  {
    // h = 2^-6 .. 2^-10 from one set of fine increments, coarsened by pair sums.
    const auto geo = make_scenario("geometric");
    const std::size_t fine = 1024, paths = 1000;
    const int levels = 5;
    std::vector<double> err(levels, 0.0);
    KernelScratch ks;
    for (std::size_t p = 0; p < paths; ++p) {
      auto g = sample_increments(GridSpec{1.0, fine, 1, {}}, kSeed, p);
      double w = 0.0;
      for (double d : g.dw) w += d;
      const double exact = std::exp(w);
      for (int l = 0; l < levels; ++l) {
        const double x = integrate_terminal(geo.system, geo.x0, g, Scheme::StratonovichHeun, ks)[0];
        err[l] += (x - exact) * (x - exact);
        IncrementGrid c = zero_increments(GridSpec{1.0, g.steps() / 2, 1, {}});
        for (std::size_t k = 0; k < c.steps(); ++k) c.dw[k] = g.dw[2 * k] + g.dw[2 * k + 1];
        g = std::move(c);
      }
    }
    std::vector<double> x, y;
    std::string pairwise;
    for (int l = 0; l < levels; ++l) {
      x.push_back(l);
      y.push_back(0.5 * std::log2(err[l] / paths));
      if (l > 0) pairwise += fmt::format("{}{:.2f}", l > 1 ? " " : "", std::sqrt(err[l] / err[l - 1]));
    }
    const double ratio = std::exp2(ols(x, y).slope);
    o.require(within_ratio(ratio), fmt::format("geometric strong-error ratio {:.3f} (pairwise {})", ratio, pairwise));
  }
  {
    const auto lg = make_scenario("langevin");
    Mat a(2, 2);
    a << 0, 1, -1, -1;
    Mat bbt = Mat::Zero(2, 2);
    bbt(1, 1) = 2.0;
    // Van Loan block exponential for the covariance integral.
    Mat big = Mat::Zero(4, 4);
    big.topLeftCorner(2, 2) = -a;
    big.topRightCorner(2, 2) = bbt;
    big.bottomRightCorner(2, 2) = a.transpose();
    const Mat e = big.exp();
    const Mat cov = e.bottomRightCorner(2, 2).transpose() * e.topRightCorner(2, 2);
    const Vec mean = a.exp() * lg.x0;

    const std::size_t paths = 100000;
    const GridSpec spec{1.0, 256, 1, {}};
    const auto xs = map_paths<Vec>(paths, KernelScratch{}, [&](std::size_t p, KernelScratch& ks) {
      return integrate_terminal(lg.system, lg.x0, sample_increments(spec, kSeed, p), Scheme::StratonovichHeun, ks);
    });
    Vec m = Vec::Zero(2);
    for (const auto& x : xs.values) m += *x;
    m /= static_cast<double>(paths);
    Mat c = Mat::Zero(2, 2);
    for (const auto& x : xs.values) c += (*x - m) * (*x - m).transpose();
    c /= static_cast<double>(paths - 1);
    double worst = 0.0;
    for (int i = 0; i < 2; ++i) {
      worst = std::max(worst, std::abs(m[i] - mean[i]) / std::sqrt(cov(i, i) / paths));
      for (int j = i; j < 2; ++j) {
        const double se = std::sqrt((cov(i, i) * cov(j, j) + cov(i, j) * cov(i, j)) / paths);
        worst = std::max(worst, std::abs(c(i, j) - cov(i, j)) / se);
      }
    }
    o.require(worst < kMaxStdErrors, fmt::format("langevin mean/cov worst {:.2f} SE at {} paths", worst, paths));
  }
  return o;
}

// ---------------------------------------------------------------- 5

VectorField random_quadratic(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Expr> c;
  for (int i = 0; i < 3; ++i) {
    std::vector<Expr> t{Expr::constant(u(rng))};
    for (int j = 0; j < 3; ++j) {
      t.push_back(u(rng) * Expr::variable(j));
      for (int k = j; k < 3; ++k) t.push_back(u(rng) * Expr::variable(j) * Expr::variable(k));
    }
    c.push_back(sum(t));
  }
  return VectorField(c);
}

std::optional<int> scenario_level(const Scenario& sc, bool& undetermined, std::size_t& vanishing) {
  std::optional<int> level = 0;
  for (const auto& x : sc.test_points) {
    const auto r = check_parabolic_hormander(sc.system.fields(), x, 4);
    for (const auto& v : r.family.vanishing) vanishing += v.size();
    if (!r.level) {
      undetermined = true;
      level.reset();
    } else if (level) {
      level = std::max(*level, *r.level);
    }
  }
  return level;
}

Outcome bracket_machinery() {
  Outcome o;
  std::mt19937_64 rng(kSeed);
  std::uniform_real_distribution<double> unit(-1, 1);
  const auto u = random_quadratic(rng), v = random_quadratic(rng), w = random_quadratic(rng);
  const auto uv = lie_bracket(u, v), vu = lie_bracket(v, u);
  const auto jacobi =
      lie_bracket(u, lie_bracket(v, w)) + lie_bracket(v, lie_bracket(w, u)) + lie_bracket(w, lie_bracket(u, v));
  const Expr f = parse_expression("x1^2*x2 - x3^3 + x1*x2*x3 + sin(x1)*exp(x3)", indexed_symbols('x', 3));
  const Expr comm = apply_operator(u, apply_operator(v, f)) - apply_operator(v, apply_operator(u, f));
  const Expr via = apply_operator(uv, f);
  double anti = 0.0, jac = 0.0, op = 0.0;
  for (int t = 0; t < 100; ++t) {
    Vec p(3);
    for (int i = 0; i < 3; ++i) p[i] = unit(rng);
    anti = std::max(anti, (uv.eval(p) + vu.eval(p)).cwiseAbs().maxCoeff());
    jac = std::max(jac, jacobi.eval(p).cwiseAbs().maxCoeff());
    const std::span<const double> ps(p.data(), 3);
    op = std::max(op, std::abs(evaluate(comm, ps) - evaluate(via, ps)));
  }
  o.require(anti <= kBracketTol, fmt::format("antisymmetry {:.1e}", anti));
  o.require(jac <= kBracketTol, fmt::format("Jacobi {:.1e}", jac));
  o.require(op <= kBracketTol, fmt::format("commutator {:.1e}", op));

  ScenarioParams p2;
  p2.dimension = 2;
  struct Expect {
    const char* name;
    ScenarioParams params;
    std::optional<int> level;
  };
  for (const auto& e : {Expect{"langevin", {}, 1}, Expect{"counterexample", {}, 1}, Expect{"brownian", p2, 0},
                        Expect{"degenerate", {}, std::nullopt}}) {
    const auto sc = make_scenario(e.name, e.params);
    bool undetermined = false;
    std::size_t vanishing = 0;
    const auto level = scenario_level(sc, undetermined, vanishing);
    const std::string got = level ? std::to_string(*level) : "undetermined";
    if (e.level) {
      o.require(level == e.level, fmt::format("{} k* = {}", e.name, got));
    } else {
      o.require(undetermined && vanishing > 0,
                fmt::format("{} k* = {} with {} zero brackets", e.name, got, vanishing));
    }
  }
  return o;
}

// ---------------------------------------------------------------- 6

double max_deviation(const ControlPath& a, const ControlPath& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.states.size(); ++k) d = std::max(d, (a.states[k] - b.states[k]).norm());
  return d;
}

Outcome oscillatory_limit() {
  Outcome o;
  const std::vector<std::string> names{"x1", "x2"};
  const auto u = VectorField::parse("1 ; 0", names);
  const auto v = VectorField::parse("0 ; x1", names);
  const Vec x0 = Vec::Zero(2);
  const auto target = autonomous_flow(lie_bracket(u, v) * 0.5, x0, 1.0, 4000).endpoint;
  std::vector<double> errs;
  for (int n : {4, 8, 16, 32}) {
    const auto steps = static_cast<std::size_t>(kOscillationResolution * n * n);
    errs.push_back((oscillatory_control(u, v, x0, n, 1.0, steps).endpoint - target).norm());
  }
  bool mono = true;
  for (std::size_t i = 1; i < errs.size(); ++i) mono = mono && errs[i] < errs[i - 1];
  o.require(mono, fmt::format("errors {:.3g} {:.3g} {:.3g} {:.3g} decreasing", errs[0], errs[1], errs[2], errs[3]));
  o.require(errs.back() < kControlFinalShare * errs.front(),
            fmt::format("final/first {:.3g}", errs.back() / errs.front()));

  auto deviations = [&](std::initializer_list<int> freqs) {
    std::vector<double> d;
    for (int n : freqs) {
      const auto steps = static_cast<std::size_t>(kOscillationResolution * n * n);
      const auto path = drift_perturbation_control(u, v, x0, n, 1.0, steps);
      d.push_back(max_deviation(path, autonomous_flow(u, x0, 1.0, path.states.size() - 1)));
    }
    return d;
  };
  const auto d = deviations({4, 8, 16, 32, 64});
  std::string judged, shown;
  bool ok = true;
  for (std::size_t i = 1; i < d.size(); ++i) {
    const double r = d[i - 1] / d[i];
    if (i == 1) {
      shown = fmt::format("{:.3f}", r);
    } else {
      judged += fmt::format("{}{:.3f}", judged.empty() ? "" : " ", r);
      ok = ok && within_ratio(r);
    }
  }
  o.require(ok, fmt::format("drift sup-deviation ratios over n = 8..64: {}", judged));
  o.note(fmt::format("ratio 4 -> 8 (not judged) {}", shown));
  return o;
}

// ---------------------------------------------------------------- 7

Outcome quadratic_forms() {
  Outcome o;
  for (const auto& name : scenario_names()) {
    const auto sc = make_scenario(name);
    const int n = sc.system.dimension();
    const GridSpec spec{1.0, 100, sc.system.noise_count(), {}};
    const auto dt = spec.step_sizes();
    const auto gaps = map_paths<double>(1000, [&](std::size_t p) {
      const auto flow = integrate(sc.system, sc.x0, sample_increments(spec, kSeed, p));
      return quadratic_form_decomposition(flow, sc.system, dt, random_direction(kSeed, p, 0, n)).relative_gap;
    });
    double worst = 0.0;
    for (const auto& g : gaps.values) worst = std::max(worst, g.value_or(INFINITY));
    o.require(worst <= kQuadraticFormTol && gaps.excluded == 0, fmt::format("{} {:.1e}", name, worst));
  }
  return o;
}

// ---------------------------------------------------------------- 8

Outcome nondegeneracy() {
  Outcome o;
  TailOptions opt;
  opt.epsilons = dyadic_epsilons(-14, -2);
  opt.fit_lo = std::ldexp(1.0, -14);
  opt.fit_hi = std::ldexp(1.0, -6);
  opt.paths = 100000;
  opt.grid = GridSpec{1.0, 100, 1, {}};
  opt.seed = kSeed;
  opt.floor_slope = calibration::kFloorSlope;

  const auto lv = make_scenario("langevin");
  opt.policy = EtaPolicy::axes_and_random(lv.system.dimension());
  const auto rep = tail_scaling(lv.system, lv.x0, opt);
  if (rep.status == TailStatus::Fitted) {
    o.require(rep.slope > calibration::kTailSlopeMin,
              fmt::format("langevin fitted slope {:.2f} > {}", rep.slope, calibration::kTailSlopeMin));
  } else {
    double p_hi = 0.0;
    for (const auto& b : rep.bins) {
      if (b.epsilon <= opt.fit_hi) p_hi = std::max(p_hi, b.p_hi);
    }
    o.require(rep.status == TailStatus::NoTailMass,
              fmt::format("langevin {}: no path below 2^-6, P <= {:.1e} (95%) at every eps, min lambda(C) {:.4f}, "
                          "slope > {} holds vacuously",
                          tail_status_name(rep.status), p_hi, rep.min_lambda, calibration::kTailSlopeMin));
  }

  const auto dg = make_scenario("degenerate");
  opt.policy = EtaPolicy::axes_and_random(dg.system.dimension());
  const auto drep = tail_scaling(dg.system, dg.x0, opt);
  o.require(drep.status == TailStatus::Floor, fmt::format("degenerate {} (slope {:.3f}, p_lo at 2^-14 {:.3f})",
                                                          tail_status_name(drep.status), drep.slope,
                                                          drep.bins.empty() ? 0.0 : drep.bins.front().p_lo));
  return o;
}

// ---------------------------------------------------------------- 9

Outcome density_probes() {
  Outcome o;
  struct Probe {
    const char* scenario;
    const char* g;
    int j;
    int dim;
  };
  for (const auto& c : {Probe{"brownian", "x1^2", 0, 1}, Probe{"brownian", "x1", 1, 2}, Probe{"langevin", "sin(q)", 0, 2}}) {
    ScenarioParams p;
    p.dimension = c.dim;
    const auto sc = make_scenario(c.scenario, p);
    ProbeOptions opt;
    opt.direction = c.j;
    opt.grid = GridSpec{1.0, 64, sc.system.noise_count(), {}};
    opt.paths = 100000;
    opt.seed = kSeed;
    const auto r = ibp_density_probe(sc.system, sc.x0, parse_expression(c.g, named_symbols(sc.system.names())), opt);
    o.require(std::abs(r.z) < calibration::kProbeMaxZ,
              fmt::format("{} G = {} j = {}: z = {:.2f} ({} excluded)", c.scenario, c.g, c.j + 1, r.z, r.excluded));
  }
  return o;
}

// ---------------------------------------------------------------- 10

Outcome interpolation_lemma() {
  Outcome o;
  const std::size_t n = 2048;
  double min_slack = INFINITY;
  std::size_t non_monotone = 0, count = 0;
  for (const auto& fn : dtf_corpus(kSeed)) {
    const auto [f, df] = sample_function(fn, n);
    min_slack = std::min(min_slack, check_dtf(f, df, kDefaultHolderAlpha).slack);
    double prev = -1.0;
    bool mono = true;
    for (std::size_t q : {n / 8, n / 4, n / 2, n}) {
      const double h = HoelderProfile::compute(q == n ? f : sample_function(fn, q).first, kDefaultHolderAlpha).holder;
      mono = mono && h >= prev;
      prev = h;
    }
    non_monotone += !mono;
    ++count;
  }
  o.require(count == 200, fmt::format("{} functions", count));
  o.require(min_slack >= 0.0, fmt::format("min slack {:.3f}", min_slack));
  o.require(non_monotone == 0, fmt::format("{} non-monotone Hoelder sequences", non_monotone));
  return o;
}

// ---------------------------------------------------------------- 11

Outcome norris_fixtures() {
  Outcome o;
  ImplicationOptions events;
  for (int k = 0; k <= 40; ++k) events.epsilons.push_back(std::pow(2.0, -k / 4.0));

  const double e0 = 0.01;
  const std::size_t count = 20;
  std::size_t mismatches = 0;
  for (const auto& s : implication_tables(std::vector<PathSups>(count, PathSups{e0, e0, 0.0}), events)) {
    for (const auto& b : s.bins) {
      const bool a = e0 < b.epsilon;
      const bool bb = e0 < std::pow(b.epsilon, s.r);
      mismatches += (b.count_a != (a ? count : 0)) + (b.count_b != (bb ? count : 0)) +
                    (b.count_a_not_b != (a && !bb ? count : 0));
    }
  }
  o.require(mismatches == 0, fmt::format("fixture tables exact ({} mismatches)", mismatches));

  const auto lv = make_scenario("langevin");
  NorrisOptions opt;
  opt.events = events;
  opt.grid = GridSpec{1.0, 256, 1, {}};
  opt.paths = 100000;
  opt.seed = kSeed;
  const auto res = norris_scaling(lv.system, lv.x0, lv.system.field(1), opt);
  bool found = false;
  for (const auto& s : res.tables) {
    if (std::abs(s.r - calibration::kNorrisR) > 1e-12) continue;
    found = true;
    std::size_t below = 0;
    for (const auto& b : s.bins) {
      if (b.epsilon < s.resolvable_lo) below += b.count_a_not_b;
    }
    o.require(s.status == DecayStatus::Fitted && s.slope >= calibration::kNorrisDecayMin,
              fmt::format("r = 1/80: {} slope {:.2f} +- {:.2f} >= {} over [{:.3f}, {:.3f}]",
                          decay_status_name(s.status), s.slope, s.slope_stderr, calibration::kNorrisDecayMin,
                          s.resolvable_lo, s.resolvable_hi));
    o.require(below == 0, fmt::format("{} violations below the resolvable range", below));
  }
  if (!found) o.require(false, "r = 1/80 missing from the tables");
  return o;
}

// ---------------------------------------------------------------- 12

Outcome containment() {
  Outcome o;
  const double h = 1e-3;
  const auto r = counterexample_containment(10000, GridSpec{1.0, 1000, 1, {}}, kSeed);
  const double bound = std::numbers::pi / 2 + 10 * std::sqrt(h);
  o.require(r.sup_abs <= bound && r.excluded == 0,
            fmt::format("sup |x| {:.4f} <= {:.4f} over {} paths", r.sup_abs, bound, r.paths));

  // Terminal samples on the coarser h = 1e-2 grid keep 10^6 paths inside the budget.
  const auto sc = make_scenario("counterexample");
  const GridSpec spec{1.0, 100, 1, {}};
  const auto xs = map_paths<double>(1000000, KernelScratch{}, [&](std::size_t p, KernelScratch& ks) {
    return integrate_terminal(sc.system, sc.x0, sample_increments(spec, kSeed + 1, p), Scheme::StratonovichHeun,
                              ks)[0];
  });
  std::vector<double> samples;
  samples.reserve(xs.values.size());
  for (const auto& x : xs.values) {
    if (x) samples.push_back(*x);
  }
  const double bw = silverman_bandwidth(samples);
  const double mass = kde_mass_outside(samples, bw, -std::numbers::pi / 2, std::numbers::pi / 2);
  o.require(mass < kKdeMassOutside,
            fmt::format("KDE mass outside {:.2e} at {} samples, bandwidth {:.4f}", mass, samples.size(), bw));
  return o;
}

// ---------------------------------------------------------------- 13

Outcome determinism() {
  Outcome o;
  const std::vector<std::pair<std::string, std::vector<std::string>>> runs{
      {"bracket", {"scenario=counterexample"}},
      {"simulate", {"scenario=counterexample", "paths=2000", "N=200", "kde=true"}},
      {"simulate", {"scenario=geometric", "paths=500", "convergence_levels=[6,7,8]"}},
      {"malliavin", {"paths=2000", "N=50", "tasks=[\"covariance\",\"moments\",\"tail\",\"probe\"]",
                     "probe_observable=sin(q)", "probe_paths=300", "probe_N=16"}},
      {"discrete", {"mc_samples=2000"}},
      {"norris", {"paths=2000", "N=64"}},
      {"control-demo", {}},
  };
  const auto root = std::filesystem::temp_directory_path() / "malliavin-acceptance";
  std::size_t files = 0;
  for (const auto& [cmd, sets] : runs) {
    std::vector<std::string> outputs[2];
    std::vector<std::string> names[2];
    int codes[2] = {0, 0};
    const int threads[2] = {1, 4};
    for (int t = 0; t < 2; ++t) {
      std::ostringstream log;
      const auto dir = root / fmt::format("threads{}", threads[t]);
      std::filesystem::remove_all(dir);
      const auto res = cli::run(cli::make_config(cmd, kSeed, std::nullopt, sets, dir, threads[t]), log);
      codes[t] = res.exit_code;
      names[t] = res.files;
      for (const auto& f : res.files) {
        if (f.ends_with(".csv")) outputs[t].push_back(read_file(res.dir / f));
      }
    }
    const bool same = names[0] == names[1] && outputs[0] == outputs[1];
    o.require(same && codes[0] == cli::kExitOk && codes[1] == cli::kExitOk,
              fmt::format("{} ({} csv{})", cmd, outputs[0].size(),
                          codes[0] || codes[1] ? fmt::format(", exit {} / {}", codes[0], codes[1]) : ""));
    files += outputs[0].size();
  }
  o.note(fmt::format("{} csv files compared byte for byte, threads 1 vs 4", files));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "exact discrete identities", 10, exact_identities},
      {2, "refinement invariance", 5, refinement_invariance},
      {3, "Malliavin derivative vs bumps", 60, derivative_identity},
      {4, "closed-form SDE oracles", 120, sde_oracles},
      {5, "bracket machinery", 10, bracket_machinery},
      {6, "oscillatory-control limit", 60, oscillatory_limit},
      {7, "quadratic-form decomposition", 60, quadratic_forms},
      {8, "non-degeneracy separation", 300, nondegeneracy},
      {9, "IBP density probe", 300, density_probes},
      {10, "interpolation lemma corpus", 10, interpolation_lemma},
      {11, "Norris fixtures", 300, norris_fixtures},
      {12, "counterexample containment", 120, containment},
      {13, "determinism across threads", 0, determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.budget <= 0 || secs < c.budget;
    const bool ok = out.ok && in_time;
    failed += !ok;
    const std::string budget = c.budget > 0 ? fmt::format("{:.1f}s < {:.0f}s", secs, c.budget)
                                            : fmt::format("{:.1f}s", secs);
    std::cout << fmt::format("[{}] C{:<2} {:<32} {}{}  {}\n", ok ? "PASS" : "FAIL", c.id, c.title, budget,
                             in_time ? "" : " OVER BUDGET", out.detail)
              << std::flush;
  }
  std::cout << fmt::format("{} criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
