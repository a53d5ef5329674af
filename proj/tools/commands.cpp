// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "malliavin/calibration.hpp"
#include "malliavin/discrete_corpus.hpp"
#include "malliavin/dmall.hpp"
#include "malliavin/errors.hpp"
#include "malliavin/io.hpp"
#include "malliavin/mmatrix.hpp"
#include "malliavin/norris.hpp"
#include "malliavin/parser.hpp"
#include "malliavin/scenarios.hpp"
#include "malliavin/sde.hpp"
#include "malliavin/stats.hpp"
#include "malliavin/vfield.hpp"

namespace malliavin::cli {

namespace {

Json jnum(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

Json scenario_defaults(const std::string& name) {
  return Json{{"scenario", name}, {"dimension", 1}, {"potential", 1.0}, {"temperature", 1.0}, {"x0", Json::array()}};
}

Json with(Json base, const Json& extra) {
  for (auto it = extra.begin(); it != extra.end(); ++it) base[it.key()] = it.value();
  return base;
}

std::vector<double> doubles(const Json& v) { return v.get<std::vector<double>>(); }

Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

Scenario scenario_from(const Json& v) {
  ScenarioParams p;
  p.dimension = v.at("dimension").get<int>();
  p.potential = v.at("potential").get<double>();
  p.temperature = v.at("temperature").get<double>();
  const auto x0 = doubles(v.at("x0"));
  if (!x0.empty()) p.x0 = to_vec(x0);
  auto sc = make_scenario(v.at("scenario").get<std::string>(), p);
  if (sc.x0.size() != sc.system.dimension()) throw InputError("x0 has the wrong dimension");
  return sc;
}

std::size_t positive(const Json& v, const char* key) {
  const auto x = v.at(key).get<double>();
  if (!(x >= 1.0) || x != std::floor(x)) throw InputError(fmt::format("'{}' must be a positive integer", key));
  return static_cast<std::size_t>(x);
}

GridSpec unit_grid(double horizon, std::size_t steps, int m) {
  GridSpec g;
  g.horizon = horizon;
  g.steps = steps;
  g.noise_count = m;
  return g;
}

std::vector<std::string> prefixed(const std::string& prefix, const std::vector<std::string>& names) {
  std::vector<std::string> out;
  for (const auto& n : names) out.push_back(prefix + n);
  return out;
}

std::filesystem::path resolve_input(const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_absolute() || std::filesystem::exists(path)) return path;
  auto alt = std::filesystem::path(MALLIAVIN_SOURCE_DIR) / path;
  if (std::filesystem::exists(alt)) return alt;
  throw InputError("input file not found: " + p);
}

bool has_task(const Json& v, const std::string& task) {
  for (const auto& t : v.at("tasks")) {
    if (t.get<std::string>() == task) return true;
  }
  return false;
}

void require_tasks(const Json& v, std::initializer_list<const char*> known) {
  for (const auto& t : v.at("tasks")) {
    const auto s = t.get<std::string>();
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return s == k; })) {
      throw InputError("unknown task '" + s + "'");
    }
  }
}

class Run {
 public:
  Run(const RunConfig& cfg, std::ostream& log) : cfg_(cfg), log_(log) {}

  const Json& v() const { return cfg_.values; }
  std::uint64_t seed() const { return cfg_.seed; }
  std::ostream& log() { return log_; }

  EnsembleOptions exec() const {
    EnsembleOptions o;
    o.threads = cfg_.threads;
    return o;
  }

  void table(const std::string& name, const CsvTable& t) { files_.emplace_back(name, t.str()); }

  void check(bool ok, const std::string& what) {
    log_ << (ok ? "  ok    " : "  FAIL  ") << what << '\n';
    if (!ok) failures.push_back(what);
  }

  void timed(const std::string& task, const std::function<void()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    timings[task] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  const std::vector<std::pair<std::string, std::string>>& files() const { return files_; }

  Json summary = Json::object();
  Json counters = Json::object();
  Json timings = Json::object();
  std::vector<std::string> failures;

 private:
  const RunConfig& cfg_;
  std::ostream& log_;
  std::vector<std::pair<std::string, std::string>> files_;
};

// ---------------------------------------------------------------- bracket

void cmd_bracket(Run& r) {
  const auto& v = r.v();
  std::vector<VectorField> fields;
  std::vector<std::string> names;
  std::vector<Vec> points;
  const auto diffusion = v.at("diffusion").get<std::vector<std::string>>();
  if (!diffusion.empty()) {
    names = v.at("names").get<std::vector<std::string>>();
    if (names.empty()) throw InputError("inline fields need variable names");
    const int n = static_cast<int>(names.size());
    const auto drift = v.at("drift").get<std::string>();
    fields.push_back(drift.empty() ? VectorField::zero(n, "V0") : VectorField::parse(drift, names, "V0"));
    for (std::size_t i = 0; i < diffusion.size(); ++i) {
      fields.push_back(VectorField::parse(diffusion[i], names, fmt::format("V{}", i + 1)));
    }
    points.push_back(Vec::Zero(n));
    r.summary["system"] = "inline";
  } else {
    const auto sc = scenario_from(v);
    fields = sc.system.fields();
    names = sc.system.names();
    points = sc.test_points;
    r.summary["system"] = sc.name;
  }
  const auto user_points = v.at("points").get<std::vector<std::vector<double>>>();
  if (!user_points.empty()) {
    points.clear();
    for (const auto& p : user_points) points.push_back(to_vec(p));
  }
  for (const auto& p : points) {
    if (p.size() != fields[0].dimension()) throw InputError("test point has the wrong dimension");
  }
  const int max_level = v.at("max_level").get<int>();
  const double tol = v.at("tol").get<double>();
  const auto cap = positive(v, "generation_cap");

  BracketFamily family;
  std::vector<std::optional<int>> levels;
  r.timed("bracket", [&] {
    family = build_bracket_family(fields, max_level, cap);
    for (const auto& p : points) levels.push_back(check_parabolic_hormander(fields, p, max_level, tol, cap).level);
  });

  CsvTable gens({"generation", "label", "field", "new"});
  for (int g = 0; g <= family.levels(); ++g) {
    for (const auto& f : family.generations[static_cast<std::size_t>(g)]) {
      bool fresh = true;
      if (g > 0) {
        const auto& prev = family.generations[static_cast<std::size_t>(g - 1)];
        fresh = std::find(prev.begin(), prev.end(), f) == prev.end();
      }
      gens.row(g, f.label(), format_field(f, names), fresh);
    }
  }
  CsvTable vanish({"generation", "label"});
  for (int g = 0; g <= family.levels(); ++g) {
    for (const auto& l : family.vanishing[static_cast<std::size_t>(g)]) vanish.row(g, l);
  }
  CsvTable dims({"point", "coordinates", "level", "dimension"});
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::string coords;
    for (Eigen::Index j = 0; j < points[i].size(); ++j) coords += fmt::format("{}{}", j ? " " : "", points[i][j]);
    for (int l = 0; l <= family.levels(); ++l) dims.row(i, coords, l, spanned_dimension(family, l, points[i], tol));
  }
  r.table("brackets.csv", gens);
  r.table("vanishing.csv", vanish);
  r.table("dimensions.csv", dims);

  const bool determined = std::all_of(levels.begin(), levels.end(), [](const auto& l) { return l.has_value(); });
  int k_star = 0;
  for (const auto& l : levels) {
    if (l) k_star = std::max(k_star, *l);
  }
  r.summary["k_star"] = determined ? Json(k_star) : Json("undetermined");
  r.summary["max_level"] = max_level;
  r.summary["points"] = points.size();
  r.counters["vanishing_brackets"] = vanish.rows();

  auto& log = r.log();
  for (int g = 0; g <= family.levels(); ++g) {
    log << fmt::format("generation {}: {} fields", g, family.generations[static_cast<std::size_t>(g)].size());
    if (!family.vanishing[static_cast<std::size_t>(g)].empty()) {
      log << fmt::format(", {} vanishing", family.vanishing[static_cast<std::size_t>(g)].size());
    }
    log << '\n';
  }
  for (const auto& f : family.generations.back()) log << fmt::format("  {} = ({})\n", f.label(), format_field(f, names));
  log << "k* = " << (determined ? std::to_string(k_star) : std::string("undetermined")) << '\n';
}

// ---------------------------------------------------------------- simulate

struct SimWorkspace {
  IncrementGrid incs;
  FlowPath flow;
  KernelScratch ks;
};

SimWorkspace sim_workspace(const GridSpec& g) {
  SimWorkspace ws;
  ws.incs = zero_increments(g);
  return ws;
}

void geometric_convergence(Run& r, const Scenario& sc, Scheme scheme, std::size_t paths) {
  const auto levels = r.v().at("convergence_levels").get<std::vector<int>>();
  if (levels.empty()) return;
  if (sc.name != "geometric") throw InputError("the convergence table needs the geometric scenario");
  CsvTable t({"level", "h", "strong_error", "std_error", "ratio"});
  double prev = 0.0;
  const double x0 = sc.x0[0];
  for (int k : levels) {
    if (k < 1 || k > 20) throw InputError("convergence levels must lie in 1..20");
    const auto g = unit_grid(1.0, std::size_t{1} << k, 1);
    auto res = map_paths<double>(
        paths, sim_workspace(g),
        [&](std::size_t p, SimWorkspace& ws) {
          sample_increments_into(ws.incs, r.seed(), p);
          const Vec x = integrate_terminal(sc.system, sc.x0, ws.incs, scheme, ws.ks);
          double w = 0.0;
          for (double d : ws.incs.dw) w += d;
          return std::abs(x[0] - x0 * std::exp(w));
        },
        r.exec());
    std::vector<double> e;
    for (const auto& x : res.values) {
      if (x) e.push_back(*x);
    }
    const auto me = mean_error(e);
    const double ratio = prev > 0.0 ? prev / me.mean : std::numeric_limits<double>::quiet_NaN();
    t.row(k, std::ldexp(1.0, -k), me.mean, me.std_error, ratio);
    if (prev > 0.0) r.check(std::abs(ratio - 2.0) <= 0.3, fmt::format("strong error ratio at h = 2^-{}: {:.3f}", k, ratio));
    prev = me.mean;
  }
  r.table("convergence.csv", t);
}

void cmd_simulate(Run& r) {
  const auto& v = r.v();
  const auto sc = scenario_from(v);
  const int n = sc.system.dimension();
  const int m = sc.system.noise_count();
  const double horizon = v.at("T").get<double>();
  if (!(horizon > 0.0)) throw InputError("T must be positive");
  const auto steps = positive(v, "N");
  const auto paths = positive(v, "paths");
  const auto scheme = parse_scheme(v.at("scheme").get<std::string>());
  const auto grid = unit_grid(horizon, steps, m);

  struct SimOut {
    Vec terminal;
    double defect = 0.0;
    double sup = 0.0;
  };
  IntegrateOptions io;
  io.scheme = scheme;
  io.store_path = false;
  EnsembleResult<SimOut> res;
  r.timed("ensemble", [&] {
    res = map_paths<SimOut>(
        paths, sim_workspace(grid),
        [&](std::size_t p, SimWorkspace& ws) {
          sample_increments_into(ws.incs, r.seed(), p);
          integrate_into(ws.flow, sc.system, sc.x0, ws.incs, io, ws.ks);
          return SimOut{ws.flow.terminal(), ws.flow.max_inverse_defect(), ws.flow.sup_abs()};
        },
        r.exec());
  });
  r.counters["paths"] = paths;
  r.counters["excluded"] = res.excluded;
  const double max_rate = v.at("max_explosion_rate").get<double>();
  if (res.exclusion_rate() > max_rate) {
    throw NumericalAbort(fmt::format("explosion rate {} ({} of {} paths) exceeds {}", res.exclusion_rate(),
                                     res.excluded, paths, max_rate));
  }

  std::vector<std::string> header{"path"};
  for (const auto& s : sc.system.names()) header.push_back(s);
  CsvTable term(header);
  CsvTable jac({"path", "max_inverse_defect", "sup_abs"});
  std::vector<std::vector<double>> comp(static_cast<std::size_t>(n));
  std::vector<double> defects;
  double sup = 0.0;
  for (std::size_t p = 0; p < res.values.size(); ++p) {
    const auto& o = res.values[p];
    if (!o) continue;
    std::vector<std::string> cells{std::to_string(p)};
    for (int i = 0; i < n; ++i) {
      cells.push_back(fmt::format("{}", o->terminal[i]));
      comp[static_cast<std::size_t>(i)].push_back(o->terminal[i]);
    }
    term.add(std::move(cells));
    jac.row(p, o->defect, o->sup);
    defects.push_back(o->defect);
    sup = std::max(sup, o->sup);
  }
  r.table("terminal.csv", term);
  r.table("jacobian.csv", jac);

  CsvTable moments({"component", "mean", "std_error"});
  for (int i = 0; i < n; ++i) {
    const auto me = mean_error(comp[static_cast<std::size_t>(i)]);
    moments.row(sc.system.names()[static_cast<std::size_t>(i)], me.mean, me.std_error);
  }
  r.table("moments.csv", moments);
  r.summary["scenario"] = sc.name;
  r.summary["scheme"] = scheme_name(scheme);
  r.summary["max_inverse_defect"] = defects.empty() ? 0.0 : *std::max_element(defects.begin(), defects.end());
  r.summary["mean_inverse_defect"] = mean_error(defects).mean;
  r.summary["sup_abs"] = sup;
  r.log() << fmt::format("{} paths ({} excluded), sup |x| = {}\n", paths, res.excluded, sup);

  const double h = horizon / static_cast<double>(steps);
  if (sc.name == "counterexample") {
    const double bound = std::numbers::pi / 2 + 10.0 * std::sqrt(h);
    r.summary["containment_bound"] = bound;
    r.check(sup <= bound, fmt::format("containment: sup |x| = {} <= {}", sup, bound));
  }

  if (v.at("kde").get<bool>()) {
    const int c = v.at("kde_component").get<int>();
    if (c < 0 || c >= n) throw InputError("kde_component out of range");
    const auto& xs = comp[static_cast<std::size_t>(c)];
    double bw = v.at("kde_bandwidth").get<double>();
    if (bw <= 0.0) bw = silverman_bandwidth(xs);
    const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
    const auto pts = positive(v, "kde_points");
    std::vector<double> grid_x(pts);
    for (std::size_t i = 0; i < pts; ++i) {
      grid_x[i] = pts == 1 ? *lo_it
                           : *lo_it - 4 * bw + (*hi_it - *lo_it + 8 * bw) * static_cast<double>(i) /
                                                   static_cast<double>(pts - 1);
    }
    std::vector<double> dens;
    r.timed("kde", [&] { dens = kde_density(xs, bw, grid_x, r.exec()); });
    CsvTable k({"x", "density"});
    for (std::size_t i = 0; i < pts; ++i) k.row(grid_x[i], dens[i]);
    r.table("kde.csv", k);
    r.summary["kde_bandwidth"] = bw;
    if (sc.name == "counterexample") {
      r.summary["kde_mass_outside"] = kde_mass_outside(xs, bw, -std::numbers::pi / 2, std::numbers::pi / 2);
    }
  }
  r.timed("convergence", [&] { geometric_convergence(r, sc, scheme, paths); });
}

// ---------------------------------------------------------------- malliavin

void cmd_malliavin(Run& r) {
  const auto& v = r.v();
  require_tasks(v, {"covariance", "moments", "tail", "probe"});
  const auto sc = scenario_from(v);
  const int n = sc.system.dimension();
  const int m = sc.system.noise_count();
  const auto steps = positive(v, "N");
  const auto paths = positive(v, "paths");
  const auto grid = unit_grid(1.0, steps, m);
  r.summary["scenario"] = sc.name;
  const bool hormander = check_parabolic_hormander(sc.system.fields(), sc.x0, 4).level.has_value();
  r.summary["hormander_at_x0"] = hormander;

  if (has_task(v, "covariance") || has_task(v, "moments")) {
    EnsembleResult<CovarianceSample> cov;
    r.timed("covariance", [&] { cov = covariance_ensemble(sc.system, sc.x0, grid, paths, r.seed(), r.exec()); });
    r.counters["covariance_excluded"] = cov.excluded;
    std::vector<CovarianceSample> samples;
    for (auto& s : cov.values) {
      if (s) samples.push_back(std::move(*s));
    }
    if (has_task(v, "covariance")) {
      std::vector<std::string> header{"path", "lambda_min_c", "lambda_min_m", "asymmetry"};
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) header.push_back(fmt::format("c{}{}", i + 1, j + 1));
      }
      CsvTable t(header);
      double worst_asym = 0.0;
      double min_lambda = std::numeric_limits<double>::infinity();
      for (const auto& s : samples) {
        std::vector<std::string> cells{std::to_string(s.path), fmt::format("{}", s.lambda_min_c),
                                       fmt::format("{}", s.lambda_min_m), fmt::format("{}", s.asymmetry)};
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) cells.push_back(fmt::format("{}", s.c(i, j)));
        }
        t.add(std::move(cells));
        worst_asym = std::max(worst_asym, s.asymmetry);
        min_lambda = std::min(min_lambda, s.lambda_min_c);
      }
      r.table("covariance.csv", t);
      r.summary["covariance"] = {{"paths", samples.size()}, {"min_lambda", jnum(min_lambda)}, {"max_asymmetry", worst_asym}};
      r.check(min_lambda >= kPsdTolerance, fmt::format("C positive semidefinite: min lambda = {}", min_lambda));
      r.check(worst_asym <= 1e-12, fmt::format("C symmetric before symmetrization: {}", worst_asym));
    }
    if (has_task(v, "moments")) {
      CsvTable t({"p", "estimate", "std_error", "used", "excluded"});
      CsvTable d({"p", "exponent", "count", "share"});
      for (double p : doubles(v.at("moment_p"))) {
        const auto rep = inverse_moment_estimate(samples, p);
        t.row(p, rep.estimate, rep.std_error, rep.used, rep.excluded);
        for (const auto& dec : rep.decades) d.row(p, dec.exponent, dec.count, dec.share);
      }
      r.table("moments.csv", t);
      r.table("moment_decades.csv", d);
    }
  }

  if (has_task(v, "tail")) {
    TailOptions opt;
    opt.epsilons = dyadic_epsilons(v.at("eps_lo").get<int>(), v.at("eps_hi").get<int>());
    opt.fit_lo = std::ldexp(1.0, v.at("fit_lo").get<int>());
    opt.fit_hi = std::ldexp(1.0, v.at("fit_hi").get<int>());
    opt.min_hits = positive(v, "min_hits");
    opt.floor_slope = v.at("floor_slope").get<double>();
    opt.paths = paths;
    opt.grid = grid;
    opt.seed = r.seed();
    opt.policy = v.at("eta_axes").get<bool>() ? EtaPolicy::axes_and_random(n, v.at("eta_random").get<int>())
                                              : EtaPolicy{{}, v.at("eta_random").get<int>()};
    opt.exec = r.exec();
    ScalingReport rep;
    r.timed("tail", [&] { rep = tail_scaling(sc.system, sc.x0, opt); });
    CsvTable t({"epsilon", "hits", "paths", "p_lo", "p_hat", "p_hi"});
    for (const auto& b : rep.bins) t.row(b.epsilon, b.hits, b.paths, b.p_lo, b.p_hat, b.p_hi);
    r.table("scaling.csv", t);
    const double p_min = v.at("p_min").get<double>();
    r.summary["tail"] = {{"status", tail_status_name(rep.status)},
                         {"slope", jnum(rep.slope)},
                         {"intercept", jnum(rep.intercept)},
                         {"fit_bins", rep.fit_bins},
                         {"policy", rep.policy},
                         {"min_quadratic_form", jnum(rep.min_quadratic_form)},
                         {"min_lambda", jnum(rep.min_lambda)},
                         {"max_lambda", jnum(rep.max_lambda)},
                         {"non_decaying", rep.status == TailStatus::Floor}};
    r.counters["tail_excluded"] = rep.excluded;
    r.log() << fmt::format("tail: {} slope {} over [{}, {}], min lambda {}\n", tail_status_name(rep.status), rep.slope,
                           opt.fit_lo, opt.fit_hi, rep.min_lambda);
    if (hormander) {
      const bool ok = rep.status == TailStatus::NoTailMass || (rep.status == TailStatus::Fitted && rep.slope > p_min);
      r.check(ok, fmt::format("tail decays for a Hoermander system: {} slope {} (p_min {})",
                              tail_status_name(rep.status), rep.slope, p_min));
    } else if (rep.status == TailStatus::Floor) {
      r.log() << "  flag  non-decaying tail (Hoermander condition fails at x0)\n";
    }
  }

  if (has_task(v, "probe")) {
    const auto text = v.at("probe_observable").get<std::string>();
    if (text.empty()) throw InputError("probe needs an observable");
    const Expr g = parse_expression(text, named_symbols(sc.system.names()));
    ProbeOptions opt;
    opt.direction = v.at("probe_direction").get<int>();
    opt.grid = unit_grid(1.0, positive(v, "probe_N"), m);
    opt.paths = positive(v, "probe_paths");
    opt.seed = r.seed();
    opt.exec = r.exec();
    ProbeResult p;
    r.timed("probe", [&] { p = ibp_density_probe(sc.system, sc.x0, g, opt); });
    CsvTable t({"lhs", "rhs", "lhs_stderr", "rhs_stderr", "difference", "difference_stderr", "z", "used", "excluded"});
    t.row(p.lhs, p.rhs, p.lhs_stderr, p.rhs_stderr, p.difference, p.difference_stderr, p.z, p.used, p.excluded);
    r.table("probe.csv", t);
    r.counters["probe_excluded"] = p.excluded;
    r.check(std::abs(p.z) < calibration::kProbeMaxZ, fmt::format("probe |z| = {:.3f} < {}", std::abs(p.z),
                                                                  calibration::kProbeMaxZ));
  }
}

// ---------------------------------------------------------------- discrete

void corpus_rows(CsvTable& t, const CorpusReport& rep) {
  for (const auto& row : rep.rows) t.row(row.id, row.identity, row.route, row.lhs, row.rhs, row.residual, row.std_error);
}

void cmd_discrete(Run& r) {
  const auto& v = r.v();
  const int degree = v.at("degree").get<int>();
  const double tol = v.at("tolerance").get<double>();
  const auto grids = default_corpus_grids();
  const std::vector<std::string> header{"id", "identity", "route", "lhs", "rhs", "residual", "std_error"};
  CsvTable worst({"suite", "identity", "worst_residual", "checks"});

  CorpusReport exact;
  r.timed("exact", [&] { exact = run_exact_corpus(grids, degree); });
  CsvTable te(header);
  corpus_rows(te, exact);
  r.table("exact.csv", te);
  for (const auto& [id, w] : exact.worst) {
    worst.row("exact", id, w, exact.checks.at(id));
    r.check(w <= tol, fmt::format("exact {} worst residual {} <= {}", id, w, tol));
  }
  r.check(exact.min_slack >= -tol, fmt::format("isometry inequality slack {} >= -{}", exact.min_slack, tol));
  r.summary["exact"] = {{"rows", exact.rows.size()},
                        {"min_slack", exact.min_slack},
                        {"displayed_form_mismatches", exact.displayed_form_mismatches}};

  CorpusReport refined;
  r.timed("refinement", [&] {
    refined = run_refinement_corpus(grids, degree, positive(v, "refinement_points"), r.seed(),
                                    v.at("refinement_fraction").get<double>());
  });
  CsvTable tr(header);
  corpus_rows(tr, refined);
  r.table("refinement.csv", tr);
  for (const auto& [id, w] : refined.worst) {
    worst.row("refinement", id, w, refined.checks.at(id));
    r.check(w <= tol, fmt::format("refinement {} worst residual {} <= {}", id, w, tol));
  }

  // the N = 1 case F = dw: E[skorokhod(F)^2] = 2 dt^2
  const auto g1 = uniform_wiener_grid(1, v.at("example_dt").get<double>());
  const auto iso = check_isometry(Integrand{increment(g1, 0)});
  const double dt = g1.dt[0];
  r.summary["isometry_example"] = {{"dt", dt}, {"lhs", iso.lhs}, {"rhs", iso.rhs}, {"expected", 2 * dt * dt}};
  r.check(std::abs(iso.lhs - 2 * dt * dt) <= tol && std::abs(iso.rhs - 2 * dt * dt) <= tol,
          fmt::format("isometry for F = dw: lhs {} rhs {} expected {}", iso.lhs, iso.rhs, 2 * dt * dt));

  const auto path = v.at("mc_corpus").get<std::string>();
  if (!path.empty()) {
    const auto corpus = parse_mc_corpus(read_file(resolve_input(path)));
    CorpusReport mc;
    r.timed("mc", [&] { mc = run_mc_corpus(corpus, positive(v, "mc_samples"), r.seed(), r.exec()); });
    CsvTable tm(header);
    corpus_rows(tm, mc);
    r.table("mc.csv", tm);
    for (const auto& [id, w] : mc.worst) worst.row("mc", id, w, mc.checks.at(id));
    std::size_t bad = 0;
    for (const auto& row : mc.rows) {
      if (row.route == "mc") {
        const double z = row.std_error > 0 ? row.residual / row.std_error : 0.0;
        const bool ok = row.identity == "moment_monitor" ? z >= -4.0 : std::abs(row.residual) <= 4 * row.std_error + tol;
        bad += !ok;
      } else {
        bad += !(std::abs(row.residual) <= tol);
      }
    }
    r.check(bad == 0, fmt::format("Monte Carlo corpus: {} of {} rows outside tolerance", bad, mc.rows.size()));
    r.summary["mc"] = {{"functionals", corpus.size()}, {"rows", mc.rows.size()}, {"min_slack", mc.min_slack}};
  }
  r.table("worst.csv", worst);
}

// ---------------------------------------------------------------- norris

std::vector<double> quarter_dyadic(int steps) {
  std::vector<double> e;
  for (int k = 0; k <= steps; ++k) e.push_back(std::pow(2.0, -k / 4.0));
  return e;
}

std::optional<Vec> optional_eta(const Json& j) {
  const auto e = doubles(j);
  if (e.empty()) return std::nullopt;
  return to_vec(e).normalized();
}

void implication_rows(CsvTable& t, const std::vector<AlmostImplicationStats>& tabs) {
  for (const auto& s : tabs) {
    for (const auto& b : s.bins) {
      t.row(s.r, b.epsilon, b.paths, b.count_a, b.count_b, b.count_a_not_b, b.p_violation, b.p_lo, b.p_hi, b.censored);
    }
  }
}

const std::vector<std::string> kImplicationHeader{"r",       "epsilon", "paths", "count_a", "count_b", "count_a_not_b",
                                                  "p_viol",  "p_lo",    "p_hi",  "censored"};

void cmd_norris(Run& r) {
  const auto& v = r.v();
  require_tasks(v, {"dtf", "fixture", "scaling", "cascade"});
  const double alpha = v.at("alpha").get<double>();
  ImplicationOptions events;
  events.epsilons = quarter_dyadic(v.at("eps_quarter_steps").get<int>());
  events.r_grid = doubles(v.at("r_grid"));
  events.min_conditioning = positive(v, "min_conditioning");

  if (has_task(v, "dtf")) {
    const auto n = positive(v, "dtf_intervals");
    if (n < 8) throw InputError("dtf_intervals must be at least 8");
    CsvTable t({"name", "sup", "derivative_holder", "lhs", "rhs", "slack", "holder_monotone"});
    double min_slack = std::numeric_limits<double>::infinity();
    std::size_t non_monotone = 0;
    r.timed("dtf", [&] {
      for (const auto& fn : dtf_corpus(r.seed())) {
        const auto [f, df] = sample_function(fn, n);
        const auto res = check_dtf(f, df, alpha);
        double prev = -1.0;
        bool mono = true;
        for (std::size_t q : {n / 8, n / 4, n / 2, n}) {
          const double h = HoelderProfile::compute(q == n ? f : sample_function(fn, q).first, alpha).holder;
          mono = mono && h >= prev;
          prev = h;
        }
        non_monotone += !mono;
        min_slack = std::min(min_slack, res.slack);
        t.row(fn.name, res.sup, res.derivative_holder, res.lhs, res.rhs, res.slack, mono);
      }
    });
    r.table("dtf.csv", t);
    r.summary["dtf"] = {{"functions", t.rows()}, {"min_slack", min_slack}, {"non_monotone", non_monotone}};
    r.check(min_slack >= 0.0, fmt::format("interpolation inequality: min slack {} >= 0", min_slack));
    r.check(non_monotone == 0, fmt::format("Hoelder constant monotone under refinement ({} failures)", non_monotone));
  }

  if (has_task(v, "fixture")) {
    const double e0 = v.at("fixture_epsilon0").get<double>();
    const std::size_t count = 20;
    const std::vector<PathSups> sups(count, PathSups{e0, e0, 0.0});
    const auto tabs = implication_tables(sups, events);
    CsvTable t({"r", "epsilon", "count_a", "count_b", "count_a_not_b", "expected_a", "expected_b", "expected_a_not_b"});
    std::size_t mismatches = 0;
    for (const auto& s : tabs) {
      for (const auto& b : s.bins) {
        const bool a = e0 < b.epsilon;
        const bool bb = e0 < std::pow(b.epsilon, s.r);
        const std::size_t ea = a ? count : 0;
        const std::size_t eb = bb ? count : 0;
        const std::size_t ev = a && !bb ? count : 0;
        mismatches += (b.count_a != ea) + (b.count_b != eb) + (b.count_a_not_b != ev);
        t.row(s.r, b.epsilon, b.count_a, b.count_b, b.count_a_not_b, ea, eb, ev);
      }
    }
    r.table("fixture.csv", t);
    r.check(mismatches == 0, fmt::format("deterministic fixture table exact ({} mismatches)", mismatches));
  }

  if (has_task(v, "scaling") || has_task(v, "cascade")) {
    const auto sc = scenario_from(v);
    const int m = sc.system.noise_count();
    const auto grid = unit_grid(1.0, positive(v, "N"), m);
    const auto paths = positive(v, "paths");
    r.summary["scenario"] = sc.name;

    if (has_task(v, "scaling")) {
      const int fi = v.at("field_index").get<int>();
      if (fi < 0 || fi > m) throw InputError("field_index out of range");
      NorrisOptions opt;
      opt.events = events;
      opt.eta = optional_eta(v.at("eta"));
      opt.grid = grid;
      opt.paths = paths;
      opt.seed = r.seed();
      opt.exec = r.exec();
      NorrisResult res;
      r.timed("scaling", [&] { res = norris_scaling(sc.system, sc.x0, sc.system.field(fi), opt); });
      CsvTable t(kImplicationHeader);
      implication_rows(t, res.tables);
      r.table("scaling.csv", t);
      CsvTable d({"r", "status", "slope", "slope_stderr", "fit_bins", "resolvable_lo", "resolvable_hi"});
      std::size_t bad_counts = 0;
      const double decay_r = v.at("decay_r").get<double>();
      const double decay_min = v.at("decay_min").get<double>();
      for (const auto& s : res.tables) {
        d.row(s.r, decay_status_name(s.status), s.slope, s.slope_stderr, s.fit_bins, s.resolvable_lo, s.resolvable_hi);
        for (const auto& b : s.bins) bad_counts += b.count_a_not_b > b.count_a;
        if (std::abs(s.r - decay_r) < 1e-12) {
          r.summary["decay"] = {{"r", s.r},
                                {"status", decay_status_name(s.status)},
                                {"slope", jnum(s.slope)},
                                {"slope_stderr", jnum(s.slope_stderr)},
                                {"resolvable_lo", jnum(s.resolvable_lo)},
                                {"resolvable_hi", jnum(s.resolvable_hi)}};
          if (s.status == DecayStatus::Fitted) {
            r.check(s.slope >= decay_min, fmt::format("violation decay slope {:.3f} >= {} at r = {}", s.slope,
                                                      decay_min, s.r));
          } else {
            r.log() << fmt::format("  note  decay at r = {} is {}\n", s.r, decay_status_name(s.status));
          }
        }
      }
      r.table("decay.csv", d);
      r.counters["scaling_excluded"] = res.excluded;
      const double h = 1.0 / static_cast<double>(grid.steps);
      const double recon_tol = 20.0 * std::pow(h, 1.5) * std::max(1.0, res.z_scale);
      r.summary["reconstruction_error"] = res.reconstruction_error;
      r.check(bad_counts == 0, "P(A and not B) <= P(A) in every bin");
      r.check(res.reconstruction_error <= recon_tol, fmt::format("Z_F one-step reconstruction {} <= {}",
                                                                 res.reconstruction_error, recon_tol));
    }

    if (has_task(v, "cascade")) {
      CascadeOptions opt;
      opt.levels = v.at("cascade_levels").get<int>();
      opt.epsilon = v.at("cascade_epsilon").get<double>();
      opt.eta = optional_eta(v.at("cascade_eta"));
      opt.grid = grid;
      opt.paths = paths;
      opt.seed = r.seed();
      opt.exec = r.exec();
      CascadeTable tab;
      r.timed("cascade", [&] { tab = hormander_cascade(sc.system, sc.x0, opt); });
      CsvTable t({"generation", "label", "zero", "conditioned", "q10", "median", "q90", "unconditioned_median"});
      for (const auto& row : tab.rows) {
        t.row(row.generation, row.label, row.zero, row.conditioned, row.q10, row.median, row.q90,
              row.unconditioned_median);
      }
      r.table("cascade.csv", t);
      r.summary["cascade"] = {{"epsilon", tab.epsilon}, {"paths", tab.paths},   {"conditioned", tab.conditioned},
                              {"p_hat", tab.p_hat},     {"p_lo", tab.p_lo},     {"p_hi", tab.p_hi},
                              {"censored", tab.censored}};
      r.counters["cascade_excluded"] = tab.excluded;
      if (tab.censored) {
        r.log() << fmt::format("  note  cascade censored: conditioning event empty in {} paths\n", tab.paths);
      } else {
        const auto q = doubles(v.at("cascade_q"));
        for (const auto& row : tab.rows) {
          const auto g = static_cast<std::size_t>(row.generation);
          if (row.zero || g >= q.size()) continue;
          const double bound = std::pow(tab.epsilon, q[g]);
          r.check(row.median < bound, fmt::format("cascade median ||Z_{}|| = {:.4f} < eps^{} = {:.4f}", row.label,
                                                  row.median, q[g], bound));
        }
      }
    }
  }
}

// ---------------------------------------------------------------- control-demo

double max_deviation(const ControlPath& a, const ControlPath& b) {
  if (a.states.size() != b.states.size()) throw InputError("control paths have different grids");
  double d = 0.0;
  for (std::size_t k = 0; k < a.states.size(); ++k) d = std::max(d, (a.states[k] - b.states[k]).norm());
  return d;
}

void cmd_control_demo(Run& r) {
  const auto& v = r.v();
  const auto names = v.at("names").get<std::vector<std::string>>();
  const auto u = VectorField::parse(v.at("u").get<std::string>(), names, "U");
  const auto w = VectorField::parse(v.at("v").get<std::string>(), names, "V");
  const Vec x0 = to_vec(doubles(v.at("x0")));
  if (x0.size() != u.dimension()) throw InputError("x0 has the wrong dimension");
  const double horizon = v.at("T").get<double>();
  if (!(horizon > 0.0)) throw InputError("T must be positive");
  const double res = v.at("resolution").get<double>();
  if (!(res >= 1.0)) throw InputError("resolution must be at least 1");
  const auto bracket = lie_bracket(u, w);
  const auto target = autonomous_flow(bracket * 0.5, x0, horizon, 4000).endpoint;
  r.summary["bracket"] = format_field(bracket, names);

  std::vector<std::string> header{"n"};
  for (const auto& s : prefixed("x_", names)) header.push_back(s);
  for (const auto& s : prefixed("target_", names)) header.push_back(s);
  header.insert(header.end(), {"error", "ratio"});
  CsvTable t(header);
  std::vector<double> errs;
  r.timed("oscillatory", [&] {
    for (int n : v.at("n_freq").get<std::vector<int>>()) {
      if (n < 1) throw InputError("frequencies must be positive");
      const auto steps = static_cast<std::size_t>(res * n * n);
      const auto path = oscillatory_control(u, w, x0, n, horizon, steps);
      const double e = (path.endpoint - target).norm();
      std::vector<std::string> cells{std::to_string(n)};
      for (Eigen::Index i = 0; i < x0.size(); ++i) cells.push_back(fmt::format("{}", path.endpoint[i]));
      for (Eigen::Index i = 0; i < x0.size(); ++i) cells.push_back(fmt::format("{}", target[i]));
      cells.push_back(fmt::format("{}", e));
      cells.push_back(errs.empty() ? "nan" : fmt::format("{}", errs.back() / e));
      t.add(std::move(cells));
      errs.push_back(e);
    }
  });
  r.table("control.csv", t);
  const auto constant = [](const VectorField& f) {
    const auto c = f.components();
    return std::all_of(c.begin(), c.end(), [](const Expr& e) { return e.is_constant(); });
  };
  if (constant(u) && constant(w)) {
    // x(T) = x0 + U (u_n(T) - u_n(0)) + V (v_n(T) - v_n(0)) exactly
    double worst = 0.0;
    for (int n : v.at("n_freq").get<std::vector<int>>()) {
      const auto steps = static_cast<std::size_t>(res * n * n);
      const double a = static_cast<double>(n) * n * horizon;
      const Vec exact = x0 + u.eval(x0) * ((std::cos(a) - 1.0) / n) + w.eval(x0) * (std::sin(a) / n);
      worst = std::max(worst, (oscillatory_control(u, w, x0, n, horizon, steps).endpoint - exact).norm());
    }
    r.summary["closed_form_error"] = worst;
    r.check(worst <= 1e-9, fmt::format("constant fields: endpoint matches the closed form ({})", worst));
  }
  if (!errs.empty()) {
    if (errs.front() <= 1e-12) {
      const double mx = *std::max_element(errs.begin(), errs.end());
      r.check(mx <= 1e-10, fmt::format("errors at rounding level ({})", mx));
    } else {
      bool mono = true;
      for (std::size_t i = 1; i < errs.size(); ++i) mono = mono && errs[i] < errs[i - 1];
      r.check(mono, "endpoint error decreases monotonically in n");
      r.check(errs.back() < 0.25 * errs.front(),
              fmt::format("final error {} < 25% of first {}", errs.back(), errs.front()));
    }
  }

  CsvTable d({"n", "sup_deviation", "endpoint_deviation", "effective_deviation", "ratio"});
  std::vector<double> devs;
  r.timed("drift", [&] {
    for (int n : v.at("drift_n_freq").get<std::vector<int>>()) {
      if (n < 1) throw InputError("frequencies must be positive");
      const auto steps = static_cast<std::size_t>(res * n * n);
      const auto path = drift_perturbation_control(u, w, x0, n, horizon, steps);
      const auto base = autonomous_flow(u, x0, horizon, path.states.size() - 1);
      const auto eff = effective_drift_flow(u, w, x0, n, horizon, path.states.size() - 1);
      const double dev = max_deviation(path, base);
      d.row(n, dev, (path.endpoint - base.endpoint).norm(), (path.endpoint - eff.endpoint).norm(),
            devs.empty() ? std::numeric_limits<double>::quiet_NaN() : devs.back() / dev);
      devs.push_back(dev);
    }
  });
  r.table("drift.csv", d);
  for (std::size_t i = 1; i < devs.size(); ++i) {
    if (devs[i - 1] <= 1e-12) continue;
    const double ratio = devs[i - 1] / devs[i];
    r.check(std::abs(ratio - 2.0) <= 0.3, fmt::format("drift deviation ratio {:.3f} within 2 +- 0.3", ratio));
  }
}

using Command = void (*)(Run&);

const std::map<std::string, Command>& commands() {
  static const std::map<std::string, Command> table{{"bracket", cmd_bracket},   {"simulate", cmd_simulate},
                                                    {"malliavin", cmd_malliavin}, {"discrete", cmd_discrete},
                                                    {"norris", cmd_norris},     {"control-demo", cmd_control_demo}};
  return table;
}

bool same_kind(const Json& a, const Json& b) {
  if (a.is_number() && b.is_number()) {
    if (a.is_number_float()) return true;
    return !b.is_number_float() || b.get<double>() == std::floor(b.get<double>());
  }
  if (a.is_array() && b.is_array()) {
    if (a.empty()) return true;
    return std::all_of(b.begin(), b.end(), [&](const Json& x) { return same_kind(a.front(), x); });
  }
  return a.type() == b.type();
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"bracket", "simulate", "malliavin", "discrete", "norris", "control-demo"};
  return names;
}

Json default_config(const std::string& command) {
  if (command == "bracket") {
    return with(scenario_defaults("langevin"), {{"names", Json::array()},
                                                {"drift", ""},
                                                {"diffusion", Json::array()},
                                                {"points", Json::array()},
                                                {"max_level", 4},
                                                {"tol", 1e-9},
                                                {"generation_cap", 512}});
  }
  if (command == "simulate") {
    return with(scenario_defaults("brownian"), {{"T", 1.0},
                                                {"N", 1000},
                                                {"paths", 10000},
                                                {"scheme", "heun"},
                                                {"max_explosion_rate", 1e-3},
                                                {"kde", false},
                                                {"kde_component", 0},
                                                {"kde_points", 201},
                                                {"kde_bandwidth", 0.0},
                                                {"convergence_levels", Json::array()}});
  }
  if (command == "malliavin") {
    return with(scenario_defaults("langevin"), {{"tasks", {"covariance", "moments", "tail"}},
                                                {"N", 100},
                                                {"paths", 1000},
                                                {"eps_lo", -14},
                                                {"eps_hi", -2},
                                                {"fit_lo", -14},
                                                {"fit_hi", -6},
                                                {"min_hits", 10},
                                                {"floor_slope", calibration::kFloorSlope},
                                                {"p_min", calibration::kTailSlopeMin},
                                                {"eta_axes", true},
                                                {"eta_random", 16},
                                                {"moment_p", {1.0, 2.0, 4.0}},
                                                {"probe_observable", ""},
                                                {"probe_direction", 0},
                                                {"probe_N", 64},
                                                {"probe_paths", 1000}});
  }
  if (command == "discrete") {
    return Json{{"degree", 4},
                {"tolerance", 1e-12},
                {"refinement_points", 100},
                {"refinement_fraction", 0.37},
                {"example_dt", 0.5},
                {"mc_corpus", "config/discrete_corpus.txt"},
                {"mc_samples", 20000}};
  }
  if (command == "norris") {
    return with(scenario_defaults("langevin"), {{"tasks", {"dtf", "fixture", "scaling", "cascade"}},
                                                {"N", 256},
                                                {"paths", 10000},
                                                {"alpha", kDefaultHolderAlpha},
                                                {"dtf_intervals", 2048},
                                                {"fixture_epsilon0", 0.01},
                                                {"eps_quarter_steps", 40},
                                                {"r_grid", {1.0 / 80, 1.0 / 20, 1.0 / 8, 1.0 / 5}},
                                                {"min_conditioning", 10},
                                                {"field_index", 1},
                                                {"eta", Json::array()},
                                                {"decay_r", calibration::kNorrisR},
                                                {"decay_min", calibration::kNorrisDecayMin},
                                                {"cascade_levels", 1},
                                                {"cascade_epsilon", calibration::kCascadeEpsilon},
                                                {"cascade_eta", Json::array()},
                                                {"cascade_q", {calibration::kCascadeQ0, calibration::kCascadeQ1}}});
  }
  if (command == "control-demo") {
    return Json{{"names", {"x1", "x2"}},
                {"u", "1 ; 0"},
                {"v", "0 ; x1"},
                {"x0", {0.0, 0.0}},
                {"T", 1.0},
                {"resolution", kOscillationResolution},
                {"n_freq", {4, 8, 16, 32}},
                {"drift_n_freq", {8, 16, 32, 64}}};
  }
  throw InputError("unknown command '" + command + "'");
}

void merge_config(Json& base, const Json& patch, const std::string& where) {
  if (!patch.is_object()) throw InputError("configuration must be a JSON object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw InputError("unknown configuration key '" + key + "'");
    auto& slot = base[it.key()];
    if (slot.is_object()) {
      merge_config(slot, it.value(), key);
    } else if (!same_kind(slot, it.value())) {
      throw InputError(fmt::format("configuration key '{}' expects a value like {}", key, slot.dump()));
    } else {
      slot = it.value();
    }
  }
}

void apply_override(Json& base, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw InputError("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  Json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1)) {
    parts.push_back(rest.substr(0, pos));
  }
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = Json{{*it, patch}};
  merge_config(base, patch);
}

std::filesystem::path RunConfig::run_dir() const { return out_root / fmt::format("{}-{}", command, seed); }

RunConfig make_config(const std::string& command, std::uint64_t seed,
                      const std::optional<std::filesystem::path>& config_file,
                      const std::vector<std::string>& overrides, const std::filesystem::path& out_root, int threads) {
  RunConfig c;
  c.command = command;
  c.seed = seed;
  c.out_root = out_root;
  if (threads < 0) throw InputError("threads must be non-negative");
  c.threads = threads;
  c.values = default_config(command);
  if (config_file) {
    const auto text = read_file(*config_file);
    Json j = Json::parse(text, nullptr, false);
    if (j.is_discarded()) throw InputError("malformed JSON in " + config_file->string());
    merge_config(c.values, j);
  }
  for (const auto& o : overrides) apply_override(c.values, o);
  return c;
}

RunResult run(const RunConfig& config, std::ostream& log) {
  RunResult out;
  out.dir = config.run_dir();
  Run r(config, log);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const auto it = commands().find(config.command);
    if (it == commands().end()) throw InputError("unknown command '" + config.command + "'");
    it->second(r);
    if (!r.failures.empty()) {
      out.exit_code = kExitInvariant;
      out.message = fmt::format("{} invariant check(s) failed", r.failures.size());
    }
  } catch (const InputError& e) {
    out.exit_code = kExitInput;
    out.message = e.what();
  } catch (const Json::exception& e) {
    out.exit_code = kExitInput;
    out.message = e.what();
  } catch (const NumericalAbort& e) {
    out.exit_code = kExitNumerical;
    out.message = e.what();
  } catch (const InvariantFailure& e) {
    out.exit_code = kExitInvariant;
    out.message = e.what();
  } catch (const std::exception& e) {
    out.exit_code = kExitInternal;
    out.message = e.what();
  }
  r.timings["total"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.summary = r.summary;

  try {
    std::filesystem::create_directories(out.dir);
    Json files = Json::object();
    auto emit = [&](const std::string& name, const std::string& content) {
      write_file_atomic(out.dir / name, content);
      files[name] = sha256_hex(content);
      out.files.push_back(name);
    };
    for (const auto& [name, content] : r.files()) emit(name, content);
    emit("summary.json", r.summary.dump(2) + "\n");
    Json manifest{{"command", config.command},
                  {"seed", config.seed},
                  {"version", kVersion},
                  {"threads", config.threads},
                  {"config", config.values},
                  {"files", files},
                  {"timings", r.timings},
                  {"counters", r.counters},
                  {"exit_code", out.exit_code},
                  {"status", out.exit_code == kExitOk ? "ok" : "failed"},
                  {"message", out.message},
                  {"failures", r.failures}};
    write_file_atomic(out.dir / "manifest.json", manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    log << "error writing outputs: " << e.what() << '\n';
    if (out.exit_code == kExitOk) {
      out.exit_code = kExitInternal;
      out.message = e.what();
    }
  }
  return out;
}

int main_entry(int argc, char** argv) {
  CLI::App app{"Discrete Malliavin calculus and hypoellipticity experiments", "malliavin"};
  app.require_subcommand(1);
  std::optional<std::string> config_file;
  std::uint64_t seed = 0;
  std::string out = "out";
  int threads = 0;
  std::vector<std::string> sets;
  bool show = false;
  app.add_option("--config", config_file, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Random seed (required)")->required();
  app.add_option("--out", out, "Output root directory")->capture_default_str();
  app.add_option("--threads", threads, "Worker threads, 0 for the OpenMP default")->check(CLI::NonNegativeNumber);
  app.add_option("--set", sets, "Override a configuration key, key=value (repeatable)");
  app.add_flag("--show-config", show, "Print the merged configuration and exit");
  const std::map<std::string, std::string> help{
      {"bracket", "Bracket generations and the Hoermander level"},
      {"simulate", "Simulate an SDE ensemble"},
      {"malliavin", "Malliavin covariance, tail scaling, inverse moments and the density probe"},
      {"discrete", "Exact and Monte Carlo checks of the discrete calculus"},
      {"norris", "Interpolation inequality, almost-implication tables and the bracket cascade"},
      {"control-demo", "Oscillatory control and drift perturbation limits"}};
  for (const auto& name : command_names()) app.add_subcommand(name, help.at(name))->fallthrough();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    std::optional<std::filesystem::path> path;
    if (config_file) path = *config_file;
    const auto cfg = make_config(command, seed, path, sets, out, threads);
    if (show) {
      std::cout << cfg.values.dump(2) << '\n';
      return kExitOk;
    }
    const auto res = run(cfg, std::cout);
    if (res.exit_code != kExitOk) std::cerr << "malliavin " << command << ": " << res.message << '\n';
    std::cout << "outputs in " << res.dir.string() << '\n';
    return res.exit_code;
  } catch (const InputError& e) {
    std::cerr << "malliavin " << command << ": " << e.what() << '\n';
    return kExitInput;
  }
}

}  // namespace malliavin::cli
