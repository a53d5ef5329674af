// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
#include "malliavin/dmall.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "malliavin/errors.hpp"
#include "malliavin/sde.hpp"

namespace malliavin {

namespace {

void require_grid(const WienerGrid& g) {
  if (g.dt.empty()) throw InputError("wiener grid has no steps");
  if (g.m < 1) throw InputError("wiener grid needs at least one noise component");
  for (double d : g.dt) {
    if (!(d > 0.0) || !std::isfinite(d)) throw InputError("wiener grid step sizes must be positive");
  }
}

void require_var(const WienerGrid& g, std::size_t k, int i) {
  if (k >= g.steps() || i < 0 || i >= g.m) {
    throw InputError("increment (" + std::to_string(k + 1) + "," + std::to_string(i + 1) + ") outside a grid of " +
                     std::to_string(g.steps()) + " steps and " + std::to_string(g.m) + " components");
  }
}

const WienerGrid& common_grid(const Integrand& f) {
  if (f.empty()) throw InputError("empty integrand");
  const WienerGrid& g = f.front().grid;
  for (const auto& c : f) {
    if (!(c.grid == g)) throw InputError("integrand components live on different grids");
  }
  if (f.size() != g.symbols()) {
    throw InputError("integrand has " + std::to_string(f.size()) + " components, grid has " +
                     std::to_string(g.symbols()) + " increments");
  }
  return g;
}

double double_factorial(int n) {
  double r = 1.0;
  for (int k = n; k > 1; k -= 2) r *= k;
  return r;
}

}  // namespace

WienerGrid uniform_wiener_grid(std::size_t steps, double horizon, int m) {
  if (steps == 0) throw InputError("wiener grid needs at least one step");
  if (!(horizon > 0.0)) throw InputError("horizon must be positive");
  WienerGrid g{std::vector<double>(steps, horizon / static_cast<double>(steps)), m};
  require_grid(g);
  return g;
}

WienerFunctional increment(const WienerGrid& grid, std::size_t k, int i) {
  require_var(grid, k, i);
  return {Expr::variable(grid.var(k, i)), grid};
}

WienerFunctional malliavin_partial(const WienerFunctional& f, std::size_t k, int i) {
  require_var(f.grid, k, i);
  return {derivative(f.expr, f.grid.var(k, i)), f.grid};
}

WienerFunctional skorokhod(const Integrand& f) {
  const WienerGrid& g = common_grid(f);
  std::vector<Expr> terms;
  terms.reserve(2 * f.size());
  for (std::size_t v = 0; v < f.size(); ++v) {
    const int var = static_cast<int>(v);
    terms.push_back(f[v].expr * Expr::variable(var));
    terms.push_back(-g.variance(var) * derivative(f[v].expr, var));
  }
  return {sum(std::move(terms)), g};
}

SymbolResolver increment_symbols(const WienerGrid& grid) {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    for (int i = 0; i < grid.m; ++i) {
      names.push_back(grid.m == 1 ? "w" + std::to_string(k + 1)
                                  : "w" + std::to_string(k + 1) + "_" + std::to_string(i + 1));
    }
  }
  return named_symbols(std::move(names));
}

WienerFunctional parse_functional(std::string_view text, const WienerGrid& grid) {
  require_grid(grid);
  return {parse_expression(text, increment_symbols(grid)), grid};
}

std::string format_functional(const WienerFunctional& f) {
  const int m = f.grid.m;
  return to_string(f.expr, [m](int v) {
    const int k = v / m + 1;
    return m == 1 ? "w" + std::to_string(k) : "w" + std::to_string(k) + "_" + std::to_string(v % m + 1);
  });
}

// ---------------------------------------------------------------------------
// Polynomials

int Polynomial::degree() const {
  int d = 0;
  for (const auto& [e, c] : terms_) {
    int s = 0;
    for (auto p : e) s += p;
    d = std::max(d, s);
  }
  return d;
}

void Polynomial::add(const Exponents& e, double c) {
  if (c == 0.0) return;
  auto [it, fresh] = terms_.emplace(e, c);
  if (!fresh) {
    it->second += c;
    if (it->second == 0.0) terms_.erase(it);
  }
}

Polynomial Polynomial::operator+(const Polynomial& o) const {
  Polynomial out = *this;
  out.vars_ = std::max(vars_, o.vars_);
  for (const auto& [e, c] : o.terms_) out.add(e, c);
  return out;
}

Polynomial Polynomial::operator*(const Polynomial& o) const {
  if (vars_ != o.vars_) throw InputError("polynomials over different variable sets");
  Polynomial out(vars_);
  Exponents e(vars_);
  for (const auto& [a, ca] : terms_) {
    for (const auto& [b, cb] : o.terms_) {
      for (std::size_t v = 0; v < vars_; ++v) e[v] = static_cast<std::uint8_t>(a[v] + b[v]);
      out.add(e, ca * cb);
    }
  }
  return out;
}

Polynomial Polynomial::scaled(double s) const {
  Polynomial out(vars_);
  for (const auto& [e, c] : terms_) out.add(e, c * s);
  return out;
}

Polynomial Polynomial::expand(const Expr& e, std::size_t variables, int max_degree) {
  auto deg = polynomial_degree(e);
  if (!deg) throw InputError("functional is not a polynomial in the increments");
  if (*deg > max_degree) {
    throw InputError("polynomial degree " + std::to_string(*deg) + " exceeds the limit of " +
                     std::to_string(max_degree));
  }
  auto vars = e.variables();
  if (!vars.empty() && static_cast<std::size_t>(vars.back()) >= variables) {
    throw InputError("functional references an increment outside the grid");
  }
  std::unordered_map<const Node*, Polynomial> memo;
  auto rec = [&](auto&& self, const Expr& x) -> const Polynomial& {
    if (auto it = memo.find(x.node()); it != memo.end()) return it->second;
    Polynomial p(variables);
    switch (x.op()) {
      case Op::Constant:
        p.add(Exponents(variables), x.value());
        break;
      case Op::Variable: {
        Exponents ex(variables);
        ex[static_cast<std::size_t>(x.index())] = 1;
        p.add(ex, 1.0);
        break;
      }
      case Op::Sum:
        for (std::size_t a = 0; a < x.arity(); ++a) p = p + self(self, x.arg(a));
        break;
      case Op::Product:
        p.add(Exponents(variables), 1.0);
        for (std::size_t a = 0; a < x.arity(); ++a) p = p * self(self, x.arg(a));
        break;
      case Op::Power: {
        const Polynomial base = self(self, x.arg(0));
        p.add(Exponents(variables), 1.0);
        for (int k = 0; k < x.index(); ++k) p = p * base;
        break;
      }
      default:
        throw InputError("functional is not a polynomial in the increments");
    }
    return memo.emplace(x.node(), std::move(p)).first->second;
  };
  return rec(rec, e);
}

double gaussian_moment(const Polynomial::Exponents& e, const WienerGrid& grid) {
  double r = 1.0;
  for (std::size_t v = 0; v < e.size(); ++v) {
    const int p = e[v];
    if (p == 0) continue;
    if (p % 2) return 0.0;
    r *= double_factorial(p - 1) * std::pow(grid.variance(static_cast<int>(v)), p / 2);
  }
  return r;
}

double isserlis_moment(const Polynomial::Exponents& e, const WienerGrid& grid) {
  std::vector<int> slots;
  for (std::size_t v = 0; v < e.size(); ++v) {
    for (int k = 0; k < e[v]; ++k) slots.push_back(static_cast<int>(v));
  }
  if (slots.size() > static_cast<std::size_t>(Polynomial::kMaxWickDegree)) {
    throw InputError("pairing enumeration limited to degree 12");
  }
  if (slots.size() % 2) return 0.0;
  std::vector<char> used(slots.size(), 0);
  // Sum over perfect matchings of prod Cov(a, b).
  auto rec = [&](auto&& self) -> double {
    std::size_t first = 0;
    while (first < slots.size() && used[first]) ++first;
    if (first == slots.size()) return 1.0;
    used[first] = 1;
    double total = 0.0;
    for (std::size_t j = first + 1; j < slots.size(); ++j) {
      if (used[j] || slots[j] != slots[first]) continue;
      used[j] = 1;
      total += grid.variance(slots[first]) * self(self);
      used[j] = 0;
    }
    used[first] = 0;
    return total;
  };
  return rec(rec);
}

double wick_expectation(const Polynomial& p, const WienerGrid& grid) {
  double r = 0.0;
  for (const auto& [e, c] : p.terms()) r += c * gaussian_moment(e, grid);
  return r;
}

double wick_expectation(const WienerFunctional& f) {
  return wick_expectation(Polynomial::expand(f.expr, f.grid.symbols()), f.grid);
}

double wick_inner(const Polynomial& a, const Polynomial& b, const WienerGrid& grid) {
  const std::size_t n = std::max(a.variables(), b.variables());
  Polynomial::Exponents e(n);
  double r = 0.0;
  for (const auto& [ea, ca] : a.terms()) {
    for (const auto& [eb, cb] : b.terms()) {
      for (std::size_t v = 0; v < n; ++v) {
        e[v] = static_cast<std::uint8_t>((v < ea.size() ? ea[v] : 0) + (v < eb.size() ? eb[v] : 0));
      }
      r += ca * cb * gaussian_moment(e, grid);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Monte Carlo

namespace {

struct McWorkspace {
  IncrementGrid incs;
  std::vector<double> scratch;
  std::vector<double> out;
};

// Runs `samples` draws of the tape outputs; returns per-sample output rows
// (nullopt when any output is non-finite).
EnsembleResult<std::vector<double>> sample_tape(const Tape& tape, const WienerGrid& grid, std::size_t samples,
                                                std::uint64_t seed, const EnsembleOptions& opt) {
  if (samples < 2) throw InputError("Monte Carlo needs at least two samples");
  McWorkspace ws;
  ws.incs.dt = grid.dt;
  ws.incs.m = grid.m;
  ws.incs.dw.assign(grid.symbols(), 0.0);
  ws.out.assign(tape.output_count(), 0.0);
  auto res = map_paths<std::vector<double>>(
      samples, ws,
      [&](std::size_t p, McWorkspace& w) -> std::vector<double> {
        sample_increments_into(w.incs, seed, p);
        tape.evaluate(w.incs.dw, w.out, w.scratch);
        for (double x : w.out) {
          if (!std::isfinite(x)) throw NumericalAbort("non-finite evaluation");
        }
        return w.out;
      },
      opt);
  if (res.exclusion_rate() > kMaxNonfiniteRate) {
    throw NumericalAbort(std::to_string(res.excluded) + " of " + std::to_string(samples) +
                         " evaluations were non-finite");
  }
  return res;
}

McEstimate fold(const EnsembleResult<std::vector<double>>& r, const std::function<double(const std::vector<double>&)>& g) {
  McEstimate est;
  est.nonfinite = r.excluded;
  est.samples = r.included();
  double mean = 0.0;
  std::size_t n = 0;
  for (const auto& v : r.values) {
    if (!v) continue;
    ++n;
    mean += (g(*v) - mean) / static_cast<double>(n);
  }
  double ss = 0.0;
  for (const auto& v : r.values) {
    if (v) ss += (g(*v) - mean) * (g(*v) - mean);
  }
  est.mean = mean;
  est.std_error = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
  return est;
}

}  // namespace

McEstimate mc_expectation(const WienerFunctional& f, std::size_t samples, std::uint64_t seed,
                          const EnsembleOptions& opt) {
  require_grid(f.grid);
  std::vector<Expr> outs{f.expr};
  Tape tape(outs);
  auto r = sample_tape(tape, f.grid, samples, seed, opt);
  return fold(r, [](const std::vector<double>& v) { return v[0]; });
}

// ---------------------------------------------------------------------------
// Identities

namespace {

Expr ibp_lhs_integrand(const WienerFunctional& g, const Integrand& f) {
  const WienerGrid& grid = f.front().grid;
  std::vector<Expr> terms;
  for (std::size_t v = 0; v < f.size(); ++v) {
    const int var = static_cast<int>(v);
    terms.push_back(grid.variance(var) * (derivative(g.expr, var) * f[v].expr));
  }
  return sum(std::move(terms));
}

}  // namespace

IbpResult check_ibp(const WienerFunctional& g, const Integrand& f) {
  const WienerGrid& grid = common_grid(f);
  if (!(g.grid == grid)) throw InputError("G and F live on different grids");
  const std::size_t n = grid.symbols();
  IbpResult r;
  r.lhs = wick_expectation(Polynomial::expand(ibp_lhs_integrand(g, f), n), grid);
  r.rhs = wick_inner(Polynomial::expand(g.expr, n), Polynomial::expand(skorokhod(f).expr, n), grid);
  r.residual = r.lhs - r.rhs;
  return r;
}

IbpResult check_ibp_mc(const WienerFunctional& g, const Integrand& f, std::size_t samples, std::uint64_t seed,
                       const EnsembleOptions& opt) {
  const WienerGrid& grid = common_grid(f);
  if (!(g.grid == grid)) throw InputError("G and F live on different grids");
  std::vector<Expr> outs{ibp_lhs_integrand(g, f), g.expr * skorokhod(f).expr};
  Tape tape(outs);
  auto s = sample_tape(tape, grid, samples, seed, opt);
  IbpResult r;
  r.exact = false;
  r.lhs = fold(s, [](const std::vector<double>& v) { return v[0]; }).mean;
  r.rhs = fold(s, [](const std::vector<double>& v) { return v[1]; }).mean;
  auto d = fold(s, [](const std::vector<double>& v) { return v[0] - v[1]; });
  r.residual = d.mean;
  r.std_error = d.std_error;
  return r;
}

IsometryResult check_isometry(const Integrand& f) {
  const WienerGrid& grid = common_grid(f);
  const std::size_t n = grid.symbols();
  std::vector<Polynomial> fp;
  for (const auto& c : f) fp.push_back(Polynomial::expand(c.expr, n));
  // dp[u][v] = d_v F_u
  std::vector<std::vector<Polynomial>> dp(n);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = 0; v < n; ++v) dp[u].push_back(Polynomial::expand(derivative(f[u].expr, static_cast<int>(v)), n));
  }
  const Polynomial delta = Polynomial::expand(skorokhod(f).expr, n);

  IsometryResult r;
  r.lhs = wick_inner(delta, delta, grid);
  double diag = 0.0;
  double cross = 0.0;
  double square = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    const double dv = grid.variance(static_cast<int>(v));
    diag += dv * wick_inner(fp[v], fp[v], grid);
    for (std::size_t u = 0; u < n; ++u) {
      const double w = dv * grid.variance(static_cast<int>(u));
      if (!dp[u][v].terms().empty() && !dp[v][u].terms().empty()) cross += w * wick_inner(dp[u][v], dp[v][u], grid);
      if (!dp[u][v].terms().empty()) square += w * wick_inner(dp[u][v], dp[u][v], grid);
    }
  }
  r.rhs = diag + cross;
  r.residual = r.lhs - r.rhs;
  r.bound = diag + square;
  r.displayed_form_residual = r.lhs - r.bound;
  return r;
}

MonitorResult skorokhod_moment_monitor(const Integrand& f, std::size_t samples, std::uint64_t seed,
                                       const EnsembleOptions& opt) {
  const WienerGrid& grid = common_grid(f);
  const std::size_t n = grid.symbols();
  const Expr delta = skorokhod(f).expr;
  std::vector<Expr> terms;
  for (std::size_t v = 0; v < n; ++v) {
    const double dv = grid.variance(static_cast<int>(v));
    terms.push_back(dv * pow(f[v].expr, 2));
    for (std::size_t u = 0; u < n; ++u) {
      terms.push_back(dv * grid.variance(static_cast<int>(u)) * pow(derivative(f[u].expr, static_cast<int>(v)), 2));
    }
  }
  std::vector<Expr> outs{pow(delta, 2), sum(std::move(terms))};
  Tape tape(outs);
  auto s = sample_tape(tape, grid, samples, seed, opt);
  MonitorResult r;
  r.lhs = fold(s, [](const std::vector<double>& v) { return v[0]; });
  r.bound = fold(s, [](const std::vector<double>& v) { return v[1]; });
  auto d = fold(s, [](const std::vector<double>& v) { return v[1] - v[0]; });
  r.slack = d.mean;
  r.slack_stderr = d.std_error;
  return r;
}

// ---------------------------------------------------------------------------
// Refinement

int Refinement::map_var(int var, bool plus_half) const {
  const int m = grid.m;
  const auto k = static_cast<std::size_t>(var / m);
  const int i = var % m;
  if (k < split) return grid.var(k, i);
  if (k == split) return grid.var(k + (plus_half ? 1 : 0), i);
  return grid.var(k + 1, i);
}

Refinement make_refinement(const WienerGrid& grid, std::size_t split, double fraction) {
  require_grid(grid);
  if (split >= grid.steps()) throw InputError("split index outside the grid");
  if (!(fraction > 0.0 && fraction < 1.0)) throw InputError("split fraction must lie in (0, 1)");
  Refinement r;
  r.split = split;
  r.fraction = fraction;
  r.grid.m = grid.m;
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    if (k == split) {
      const double lo = fraction * grid.dt[k];
      r.grid.dt.push_back(lo);
      r.grid.dt.push_back(grid.dt[k] - lo);
    } else {
      r.grid.dt.push_back(grid.dt[k]);
    }
  }
  return r;
}

namespace {

WienerGrid coarse_grid(const Refinement& r) {
  WienerGrid g;
  g.m = r.grid.m;
  for (std::size_t k = 0; k < r.grid.steps(); ++k) {
    if (k == r.split) {
      g.dt.push_back(r.grid.dt[k] + r.grid.dt[k + 1]);
      ++k;
    } else {
      g.dt.push_back(r.grid.dt[k]);
    }
  }
  return g;
}

}  // namespace

WienerFunctional refine(const WienerFunctional& f, const Refinement& r) {
  if (f.grid.m != r.grid.m || f.grid.steps() + 1 != r.grid.steps()) {
    throw InputError("functional does not live on the grid being refined");
  }
  const int m = f.grid.m;
  Expr e = substitute(f.expr, [&](int var) {
    if (static_cast<std::size_t>(var / m) == r.split) {
      return Expr::variable(r.map_var(var, false)) + Expr::variable(r.map_var(var, true));
    }
    return Expr::variable(r.map_var(var));
  });
  return {e, r.grid};
}

Integrand refine(const Integrand& f, const Refinement& r) {
  const WienerGrid& g = common_grid(f);
  if (!(coarse_grid(r) == g)) {
    // Tolerate rounding in the split step: compare shape only.
    if (g.m != r.grid.m || g.steps() + 1 != r.grid.steps()) throw InputError("integrand does not live on the grid being refined");
  }
  const int m = g.m;
  Integrand out(r.grid.symbols());
  for (int var = 0; var < static_cast<int>(g.symbols()); ++var) {
    WienerFunctional rf = refine(f[static_cast<std::size_t>(var)], r);
    out[static_cast<std::size_t>(r.map_var(var, false))] = rf;
    if (static_cast<std::size_t>(var / m) == r.split) out[static_cast<std::size_t>(r.map_var(var, true))] = rf;
  }
  return out;
}

double dint_identity_check(const Integrand& f, std::size_t k, int i, const std::vector<std::vector<double>>& points) {
  const WienerGrid& g = common_grid(f);
  require_var(g, k, i);
  const int var = g.var(k, i);
  const Expr lhs = derivative(skorokhod(f).expr, var);
  Integrand df;
  for (const auto& c : f) df.push_back({derivative(c.expr, var), g});
  const Expr rhs = f[static_cast<std::size_t>(var)].expr + skorokhod(df).expr;
  std::vector<Expr> outs{lhs, rhs};
  Tape tape(outs);
  std::vector<double> scratch;
  double out[2];
  double worst = 0.0;
  for (const auto& p : points) {
    if (p.size() != g.symbols()) throw InputError("evaluation point has the wrong dimension");
    tape.evaluate(p, out, scratch);
    worst = std::max(worst, std::abs(out[0] - out[1]));
  }
  return worst;
}

// ---------------------------------------------------------------------------

DiscreteMalliavinMatrix::DiscreteMalliavinMatrix(const std::vector<WienerFunctional>& x) {
  if (x.empty()) throw InputError("Malliavin matrix needs at least one component");
  grid_ = x.front().grid;
  require_grid(grid_);
  n_ = x.size();
  std::vector<Expr> outs;
  for (const auto& c : x) {
    if (!(c.grid == grid_)) throw InputError("components live on different grids");
    for (std::size_t v = 0; v < grid_.symbols(); ++v) outs.push_back(derivative(c.expr, static_cast<int>(v)));
  }
  tape_ = Tape(outs);
}

Mat DiscreteMalliavinMatrix::operator()(std::span<const double> w) const {
  const std::size_t s = grid_.symbols();
  if (w.size() != s) throw InputError("sample has the wrong number of increments");
  std::vector<double> d(n_ * s);
  std::vector<double> scratch;
  tape_.evaluate(w, d, scratch);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> dx(
      d.data(), static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(s));
  Vec dt(static_cast<Eigen::Index>(s));
  for (std::size_t v = 0; v < s; ++v) dt[static_cast<Eigen::Index>(v)] = grid_.variance(static_cast<int>(v));
  Mat m = dx * dt.asDiagonal() * dx.transpose();
  return 0.5 * (m + m.transpose());
}

}  // namespace malliavin
