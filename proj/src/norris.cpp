// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
#include "malliavin/norris.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

#include <fmt/format.h>

#include "malliavin/errors.hpp"
#include "malliavin/mmatrix.hpp"
#include "malliavin/rng.hpp"
#include "malliavin/stats.hpp"

namespace malliavin {

namespace {

void require_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InputError("Hoelder exponent must lie in (0, 1]");
}

double sup_abs(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s = std::max(s, std::abs(x));
  return s;
}

double holder_constant(const std::vector<double>& v, double alpha, std::size_t stride) {
  const std::size_t n = v.size() - 1;
  const double h = 1.0 / static_cast<double>(n);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i <= n; i += stride) idx.push_back(i);
  std::vector<double> inv(idx.size());
  for (std::size_t d = 1; d < idx.size(); ++d) inv[d] = std::pow(static_cast<double>(d * stride) * h, -alpha);
  double best = 0.0;
  for (std::size_t a = 0; a < idx.size(); ++a) {
    const double fa = v[idx[a]];
    for (std::size_t b = a + 1; b < idx.size(); ++b) {
      best = std::max(best, std::abs(v[idx[b]] - fa) * inv[b - a]);
    }
  }
  return best;
}

void require_series(const std::vector<double>& v, const char* what) {
  if (v.size() < 2) throw InputError(fmt::format("{} needs at least two samples", what));
  for (double x : v) {
    if (!std::isfinite(x)) throw InputError(fmt::format("{} has a non-finite sample", what));
  }
}

// Centred cubic B-spline on [-2, 2] and its derivative.
double bspline3(double x) {
  const double a = std::abs(x);
  if (a >= 2.0) return 0.0;
  if (a >= 1.0) return (2.0 - a) * (2.0 - a) * (2.0 - a) / 6.0;
  return (4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0;
}

double bspline3_prime(double x) {
  const double a = std::abs(x);
  const double s = x < 0 ? -1.0 : 1.0;
  if (a >= 2.0) return 0.0;
  if (a >= 1.0) return -s * (2.0 - a) * (2.0 - a) / 2.0;
  return s * (-12.0 * a + 9.0 * a * a) / 6.0;
}

// Everything a Z scan needs along one path.
struct ZKernel {
  CompiledFields fields;  // F, A-field, S = [V0,F], B_1..B_m
  int m = 0;
  int n = 0;

  ZKernel(const SdeSystem& system, const VectorField& f) : m(system.noise_count()), n(system.dimension()) {
    if (f.dimension() != n) throw InputError("field F has the wrong dimension");
    const VectorField s = lie_bracket(system.drift(), f);
    VectorField a = s;
    std::vector<VectorField> all{f, VectorField(), s};
    for (int k = 1; k <= m; ++k) {
      const VectorField b = lie_bracket(system.field(k), f);
      a = a + lie_bracket(system.field(k), b) * 0.5;
      all.push_back(b);
    }
    all[1] = a;
    fields = CompiledFields(all);
  }
};

struct ZScan {
  PathSups sups;
  double reconstruction = 0.0;
};

ZScan scan_path(const ZKernel& kern, const FlowPath& flow, const IncrementGrid& incs, const Vec& eta,
                std::vector<double>& out, std::vector<double>& scratch) {
  const int n = kern.n;
  const int m = kern.m;
  const std::size_t width = static_cast<std::size_t>(3 + m);
  out.resize(width * static_cast<std::size_t>(n));
  std::vector<double> z(width);
  std::vector<double> prev(width);
  ZScan res;
  for (std::size_t k = 0; k <= flow.steps(); ++k) {
    kern.fields.eval(flow.state(k).data(), out.data(), scratch);
    const Vec y = flow.inverse_jacobian(k).transpose() * eta;
    for (std::size_t j = 0; j < width; ++j) {
      z[j] = y.dot(Eigen::Map<const Vec>(out.data() + j * static_cast<std::size_t>(n), n));
    }
    res.sups.z = std::max(res.sups.z, std::abs(z[0]));
    res.sups.a = std::max(res.sups.a, std::abs(z[1]));
    for (int i = 0; i < m; ++i) res.sups.b = std::max(res.sups.b, std::abs(z[3 + static_cast<std::size_t>(i)]));
    if (k > 0) {
      const double dt = incs.dt[k - 1];
      double pred = prev[0] + 0.5 * (prev[2] + z[2]) * dt;
      for (int i = 0; i < m; ++i) {
        const auto j = 3 + static_cast<std::size_t>(i);
        pred += 0.5 * (prev[j] + z[j]) * incs.w(k - 1, i);
      }
      res.reconstruction = std::max(res.reconstruction, std::abs(pred - z[0]));
    }
    prev = z;
  }
  return res;
}

Vec path_eta(const std::optional<Vec>& fixed, std::uint64_t seed, std::size_t path, int n) {
  if (fixed) return *fixed;
  return random_direction(seed, path, 0, n);
}

void require_eta(const std::optional<Vec>& eta, int n) {
  if (!eta) return;
  if (eta->size() != n) throw InputError("eta has the wrong dimension");
  if (std::abs(eta->norm() - 1.0) > 1e-12) throw InputError("eta must be a unit vector");
}

struct FlowWorkspace {
  IncrementGrid incs;
  FlowPath flow;
  KernelScratch ks;
  std::vector<double> out;
  std::vector<double> scratch;
};

FlowWorkspace flow_workspace(const GridSpec& grid, int m) {
  GridSpec g = grid;
  g.noise_count = m;
  FlowWorkspace ws;
  ws.incs = zero_increments(g);
  return ws;
}

}  // namespace

HoelderProfile HoelderProfile::compute(std::vector<double> values, double alpha) {
  require_alpha(alpha);
  require_series(values, "Hoelder profile");
  HoelderProfile p;
  p.alpha = alpha;
  const std::size_t n = values.size() - 1;
  p.stride = n <= kHolderAllPairsLimit ? 1 : (n + kHolderAllPairsLimit - 1) / kHolderAllPairsLimit;
  p.sup = sup_abs(values);
  p.holder = holder_constant(values, alpha, p.stride);
  p.values = std::move(values);
  return p;
}

DtfResult check_dtf(const std::vector<double>& values, const std::vector<double>& derivative, double alpha) {
  require_alpha(alpha);
  require_series(values, "function");
  require_series(derivative, "derivative");
  if (values.size() != derivative.size()) throw InputError("function and derivative lengths differ");
  DtfResult r;
  r.lhs = sup_abs(derivative);
  r.sup = sup_abs(values);
  if (r.sup == 0.0) {
    if (r.lhs > 0.0) throw InputError("identically zero function with a nonzero derivative");
    return r;
  }
  const auto prof = HoelderProfile::compute(derivative, alpha);
  r.derivative_holder = prof.holder;
  const double e = 1.0 / (1.0 + alpha);
  r.rhs = 4.0 * r.sup * std::max(1.0, std::pow(r.sup, -e) * std::pow(prof.holder, e));
  r.slack = r.rhs - r.lhs;
  return r;
}

std::pair<std::vector<double>, std::vector<double>> sample_function(const DtfFunction& fn, std::size_t intervals) {
  if (intervals < 1) throw InputError("need at least one interval");
  std::vector<double> v(intervals + 1);
  std::vector<double> d(intervals + 1);
  for (std::size_t i = 0; i <= intervals; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(intervals);
    v[i] = fn.f(t);
    d[i] = fn.df(t);
  }
  return {std::move(v), std::move(d)};
}

std::vector<DtfFunction> dtf_corpus(std::uint64_t seed) {
  std::vector<DtfFunction> out;
  std::uint64_t stream = 0;
  auto normal = [&](std::uint32_t i) { return standard_normal(seed, stream, 0, i); };

  out.push_back({"const", [](double) { return 1.5; }, [](double) { return 0.0; }});
  out.push_back({"t", [](double t) { return t; }, [](double) { return 1.0; }});
  for (int i = 0; i < 58; ++i, ++stream) {
    const int deg = 1 + i % 6;
    std::vector<double> c(static_cast<std::size_t>(deg) + 1);
    for (std::size_t j = 0; j < c.size(); ++j) c[j] = normal(static_cast<std::uint32_t>(j));
    auto f = [c](double t) {
      double s = 0.0;
      for (auto it = c.rbegin(); it != c.rend(); ++it) s = s * t + *it;
      return s;
    };
    auto df = [c](double t) {
      double s = 0.0;
      for (std::size_t j = c.size() - 1; j >= 1; --j) s = s * t + static_cast<double>(j) * c[j];
      return s;
    };
    out.push_back({fmt::format("poly{}_{}", deg, i), f, df});
  }
  for (int i = 0; i < 60; ++i, ++stream) {
    // omega from 1 to 128 geometrically, alternating amplitude laws and envelopes
    const double w = std::pow(2.0, 7.0 * static_cast<double>(i % 30) / 29.0);
    const double phi = std::numbers::pi * uniform01(seed, stream, 0, 0);
    if (i < 30) {
      const double amp = 1.0 / w;
      out.push_back({fmt::format("sin_w{:.3f}", w), [=](double t) { return amp * std::sin(w * t + phi); },
                     [=](double t) { return amp * w * std::cos(w * t + phi); }});
    } else {
      const double lam = 4.0 * uniform01(seed, stream, 0, 1);
      out.push_back({fmt::format("damped_w{:.3f}", w),
                     [=](double t) { return std::exp(-lam * t) * std::sin(w * t + phi); },
                     [=](double t) {
                       return std::exp(-lam * t) * (w * std::cos(w * t + phi) - lam * std::sin(w * t + phi));
                     }});
    }
  }
  for (int i = 0; i < 80; ++i, ++stream) {
    const int knots = 8 << (i % 4);  // spacing 1/8 .. 1/64
    const double s = 1.0 / knots;
    std::vector<double> c(static_cast<std::size_t>(knots) + 5);
    double w = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) {
      c[j] = w;
      w += std::sqrt(s) * normal(static_cast<std::uint32_t>(j));
    }
    // knot j sits at (j - 2) s
    auto f = [c, s](double t) {
      double v = 0.0;
      for (std::size_t j = 0; j < c.size(); ++j) v += c[j] * bspline3(t / s - (static_cast<double>(j) - 2.0));
      return v;
    };
    auto df = [c, s](double t) {
      double v = 0.0;
      for (std::size_t j = 0; j < c.size(); ++j) v += c[j] * bspline3_prime(t / s - (static_cast<double>(j) - 2.0));
      return v / s;
    };
    out.push_back({fmt::format("spline{}_{}", knots, i), f, df});
  }
  return out;
}

const char* decay_status_name(DecayStatus s) {
  switch (s) {
    case DecayStatus::Fitted: return "fitted";
    case DecayStatus::NoViolations: return "no_violations";
    case DecayStatus::Censored: return "censored";
  }
  return "unknown";
}

std::vector<AlmostImplicationStats> implication_tables(const std::vector<PathSups>& sups,
                                                       const ImplicationOptions& opt) {
  if (opt.epsilons.empty()) throw InputError("empty epsilon grid");
  if (opt.r_grid.empty()) throw InputError("empty r grid");
  std::vector<double> eps = opt.epsilons;
  std::sort(eps.begin(), eps.end());
  for (double e : eps) {
    if (!(e > 0.0)) throw InputError("epsilon values must be positive");
  }
  for (double r : opt.r_grid) {
    if (!(r > 0.0 && r < 1.0)) throw InputError("r must lie in (0, 1)");
  }
  std::vector<AlmostImplicationStats> out;
  for (double r : opt.r_grid) {
    AlmostImplicationStats st;
    st.r = r;
    std::vector<double> xs;
    std::vector<double> ys;
    bool any_resolvable = false;
    for (double e : eps) {
      ImplicationBin b;
      b.epsilon = e;
      b.paths = sups.size();
      const double er = std::pow(e, r);
      for (const auto& s : sups) {
        const bool a = s.z < e;
        const bool bb = s.a < er && s.b < er;
        b.count_a += a;
        b.count_b += bb;
        b.count_a_not_b += a && !bb;
      }
      if (b.paths > 0) {
        b.p_a = static_cast<double>(b.count_a) / static_cast<double>(b.paths);
        b.p_violation = static_cast<double>(b.count_a_not_b) / static_cast<double>(b.paths);
        std::tie(b.p_lo, b.p_hi) = clopper_pearson(b.count_a_not_b, b.paths, opt.confidence);
      }
      b.censored = b.count_a < opt.min_conditioning;
      if (!b.censored) {
        any_resolvable = true;
        if (std::isnan(st.resolvable_lo)) st.resolvable_lo = e;
        st.resolvable_hi = e;
        if (b.count_a_not_b > 0) {
          xs.push_back(std::log(e));
          ys.push_back(std::log(b.p_violation));
        }
      }
      st.bins.push_back(b);
    }
    st.fit_bins = xs.size();
    if (xs.size() >= 2) {
      const auto fit = ols(xs, ys);
      st.slope = fit.slope;
      st.slope_stderr = fit.slope_stderr;
      st.status = DecayStatus::Fitted;
    } else if (any_resolvable && xs.empty()) {
      st.status = DecayStatus::NoViolations;
      st.slope = std::numeric_limits<double>::infinity();
    } else {
      st.status = DecayStatus::Censored;
    }
    out.push_back(std::move(st));
  }
  return out;
}

double z_reconstruction_error(const FlowPath& flow, const SdeSystem& system, const IncrementGrid& incs,
                              const Vec& eta, const VectorField& f) {
  if (!flow.has_jacobian() || !flow.stores_path()) throw InputError("Z scan needs Jacobians and the full path");
  if (incs.steps() != flow.steps() || incs.m != system.noise_count()) throw InputError("grid does not match the flow");
  if (eta.size() != system.dimension()) throw InputError("eta has the wrong dimension");
  const ZKernel kern(system, f);
  std::vector<double> out;
  std::vector<double> scratch;
  return scan_path(kern, flow, incs, eta, out, scratch).reconstruction;
}

NorrisResult norris_scaling(const SdeSystem& system, const Vec& x0, const VectorField& f, const NorrisOptions& opt) {
  const int n = system.dimension();
  require_eta(opt.eta, n);
  if (opt.paths == 0) throw InputError("need at least one path");
  const ZKernel kern(system, f);
  IntegrateOptions io;
  auto res = map_paths<ZScan>(
      opt.paths, flow_workspace(opt.grid, system.noise_count()),
      [&](std::size_t p, FlowWorkspace& ws) {
        sample_increments_into(ws.incs, opt.seed, p);
        integrate_into(ws.flow, system, x0, ws.incs, io, ws.ks);
        return scan_path(kern, ws.flow, ws.incs, path_eta(opt.eta, opt.seed, p, n), ws.out, ws.scratch);
      },
      opt.exec);
  NorrisResult out;
  out.excluded = res.excluded;
  for (const auto& v : res.values) {
    if (!v) continue;
    out.sups.push_back(v->sups);
    out.reconstruction_error = std::max(out.reconstruction_error, v->reconstruction);
    out.z_scale = std::max(out.z_scale, v->sups.z);
  }
  out.tables = implication_tables(out.sups, opt.events);
  return out;
}

CascadeTable hormander_cascade(const SdeSystem& system, const Vec& x0, const CascadeOptions& opt) {
  const int n = system.dimension();
  require_eta(opt.eta, n);
  if (opt.levels < 0) throw InputError("cascade level must be non-negative");
  if (!(opt.epsilon > 0.0)) throw InputError("epsilon must be positive");
  if (opt.paths == 0) throw InputError("need at least one path");
  const auto family = build_bracket_family(system.fields(), opt.levels);

  std::vector<CascadeRow> rows;
  std::vector<VectorField> fields;
  for (int g = 0; g <= family.levels(); ++g) {
    const auto& gen = family.generations[static_cast<std::size_t>(g)];
    for (const auto& v : gen) {
      bool seen = false;
      if (g > 0) {
        const auto& before = family.generations[static_cast<std::size_t>(g - 1)];
        seen = std::find(before.begin(), before.end(), v) != before.end();
      }
      if (seen) continue;
      CascadeRow row;
      row.generation = g;
      row.label = v.label();
      row.zero = v.is_zero();
      rows.push_back(row);
      fields.push_back(v);
    }
    for (const auto& label : family.vanishing[static_cast<std::size_t>(g)]) {
      CascadeRow row;
      row.generation = g;
      row.label = label;
      row.zero = true;
      rows.push_back(row);
      fields.push_back(VectorField::zero(n, label));
    }
  }
  const CompiledFields compiled(fields);
  const std::size_t width = fields.size();

  struct CascadeSample {
    double quadratic = 0.0;
    std::vector<double> sups;
  };
  {
    const auto dt = opt.grid.step_sizes();
    double h = 0.0;
    for (double d : dt) h += d;
    if (std::abs(h - 1.0) > 1e-12) throw InputError("the cascade needs a grid on [0, 1]");
  }
  IntegrateOptions io;
  auto res = map_paths<CascadeSample>(
      opt.paths, flow_workspace(opt.grid, system.noise_count()),
      [&](std::size_t p, FlowWorkspace& ws) {
        sample_increments_into(ws.incs, opt.seed, p);
        integrate_into(ws.flow, system, x0, ws.incs, io, ws.ks);
        const Vec eta = path_eta(opt.eta, opt.seed, p, n);
        const auto cov = reduced_matrix(ws.flow, system, ws.incs.dt);
        CascadeSample s;
        s.quadratic = eta.dot(cov.c * eta);
        s.sups.assign(width, 0.0);
        ws.out.resize(width * static_cast<std::size_t>(n));
        for (std::size_t k = 0; k <= ws.flow.steps(); ++k) {
          compiled.eval(ws.flow.state(k).data(), ws.out.data(), ws.scratch);
          const Vec y = ws.flow.inverse_jacobian(k).transpose() * eta;
          for (std::size_t j = 0; j < width; ++j) {
            const double z = y.dot(Eigen::Map<const Vec>(ws.out.data() + j * static_cast<std::size_t>(n), n));
            s.sups[j] = std::max(s.sups[j], std::abs(z));
          }
        }
        return s;
      },
      opt.exec);

  CascadeTable t;
  t.epsilon = opt.epsilon;
  t.excluded = res.excluded;
  std::vector<const CascadeSample*> all;
  std::vector<const CascadeSample*> cond;
  for (const auto& v : res.values) {
    if (!v) continue;
    all.push_back(&*v);
    if (v->quadratic < opt.epsilon) cond.push_back(&*v);
  }
  t.paths = all.size();
  t.conditioned = cond.size();
  t.censored = cond.empty();
  if (t.paths > 0) {
    t.p_hat = static_cast<double>(t.conditioned) / static_cast<double>(t.paths);
    std::tie(t.p_lo, t.p_hi) = clopper_pearson(t.conditioned, t.paths, opt.confidence);
  }
  for (std::size_t j = 0; j < width; ++j) {
    auto& row = rows[j];
    row.conditioned = cond.size();
    std::vector<double> a;
    for (const auto* s : all) a.push_back(s->sups[j]);
    if (!a.empty()) row.unconditioned_median = quantile(a, 0.5);
    if (!cond.empty()) {
      std::vector<double> c;
      for (const auto* s : cond) c.push_back(s->sups[j]);
      row.q10 = quantile(c, 0.1);
      row.median = quantile(c, 0.5);
      row.q90 = quantile(c, 0.9);
    }
  }
  t.rows = std::move(rows);
  return t;
}

}  // namespace malliavin
