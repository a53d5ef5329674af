// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>
#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "doctest.h"
#include "malliavin/errors.hpp"
#include "malliavin/mmatrix.hpp"
#include "malliavin/parser.hpp"
#include "malliavin/rng.hpp"
#include "malliavin/scenarios.hpp"

using namespace malliavin;

namespace {

FlowPath flow_for(const Scenario& sc, std::size_t steps, std::uint64_t seed, std::uint64_t path, IncrementGrid* out = nullptr) {
  GridSpec spec{1.0, steps, sc.system.noise_count(), {}};
  auto incs = sample_increments(spec, seed, path);
  if (out) *out = incs;
  return integrate(sc.system, sc.x0, incs);
}

// C = int_0^1 e^{-As} B B^T e^{-A^T s} ds by composite Simpson.
Mat langevin_exact_c(double a, double temp) {
  Mat A(2, 2);
  A << 0, 1, -a, -1;
  Mat bb = Mat::Zero(2, 2);
  bb(1, 1) = 2 * temp;
  const int n = 2000;
  Mat c = Mat::Zero(2, 2);
  for (int k = 0; k <= n; ++k) {
    const double s = static_cast<double>(k) / n;
    const Mat e = (-A * s).exp();
    const double w = (k == 0 || k == n) ? 1 : (k % 2 ? 4 : 2);
    c += w * e * bb * e.transpose();
  }
  return c / (3.0 * n);
}

}  // namespace

TEST_CASE("brownian reduced matrix is the identity") {
  ScenarioParams p;
  p.dimension = 3;
  const auto sc = make_scenario("brownian", p);
  const auto flow = flow_for(sc, 64, 1, 0);
  const auto s = reduced_matrix(flow, sc.system, GridSpec{1.0, 64, 3, {}}.step_sizes());
  CHECK((s.c - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK((s.m - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(s.lambda_min_c == doctest::Approx(1.0));
}

TEST_CASE("geometric reduced matrix is x0^2 up to the scheme tolerance") {
  for (double x0 : {1.0, 2.5}) {
    ScenarioParams p;
    p.x0 = Vec::Constant(1, x0);
    const auto sc = make_scenario("geometric", p);
    for (std::size_t steps : {256, 1024}) {
      const double h = 1.0 / static_cast<double>(steps);
      for (std::uint64_t path = 0; path < 20; ++path) {
        const auto flow = flow_for(sc, steps, 3, path);
        const auto s = reduced_matrix(flow, sc.system, GridSpec{1.0, steps, 1, {}}.step_sizes());
        CHECK(std::abs(s.c(0, 0) / (x0 * x0) - 1.0) < 10 * h);
      }
    }
  }
}

TEST_CASE("reduced matrix rejects other horizons and incomplete flows") {
  const auto sc = make_scenario("langevin");
  GridSpec spec{2.0, 20, 1, {}};
  const auto flow = integrate(sc.system, sc.x0, sample_increments(spec, 1, 0));
  CHECK_THROWS_AS(reduced_matrix(flow, sc.system, spec.step_sizes()), InputError);
  IntegrateOptions io;
  io.store_path = false;
  GridSpec unit{1.0, 20, 1, {}};
  const auto thin = integrate(sc.system, sc.x0, sample_increments(unit, 1, 0), io);
  CHECK_THROWS_AS(reduced_matrix(thin, sc.system, unit.step_sizes()), InputError);
}

TEST_CASE("langevin reduced matrix matches the deterministic closed form") {
  const auto sc = make_scenario("langevin");
  const Mat exact = langevin_exact_c(1.0, 1.0);
  for (std::size_t steps : {100, 1000}) {
    const double h = 1.0 / static_cast<double>(steps);
    const auto s = reduced_matrix(flow_for(sc, steps, 9, 4), sc.system, GridSpec{1.0, steps, 1, {}}.step_sizes());
    CHECK((s.c - exact).norm() < 10 * h * exact.norm());
  }
}

TEST_CASE("covariance invariants on every scenario") {
  for (const auto& name : scenario_names()) {
    const auto sc = make_scenario(name);
    const int n = sc.system.dimension();
    GridSpec spec{1.0, 100, sc.system.noise_count(), {}};
    const auto dt = spec.step_sizes();
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    for (std::uint64_t path = 0; path < 50; ++path) {
      IncrementGrid incs;
      const auto flow = flow_for(sc, 100, 11, path, &incs);
      const auto s = reduced_matrix(flow, sc.system, dt);
      INFO(name, " path ", path);
      CHECK(s.asymmetry <= 1e-12);
      CHECK(s.lambda_min_c >= kPsdTolerance);
      CHECK(s.lambda_min_m >= kPsdTolerance);
      Vec eta(n);
      for (int i = 0; i < n; ++i) eta[i] = nd(rng);
      eta.normalize();
      // Congruence <eta, M eta> = <J^T eta, C J^T eta>.
      const Vec jt = flow.jacobian(flow.steps()).transpose() * eta;
      const double lhs = eta.dot(s.m * eta);
      const double rhs = jt.dot(s.c * jt);
      CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(lhs)));
      const auto q = quadratic_form_decomposition(flow, sc.system, dt, eta);
      CHECK(q.relative_gap <= 1e-10);
    }
  }
}

TEST_CASE("quadratic form examples") {
  const auto bm = make_scenario("brownian");
  GridSpec spec{1.0, 50, 1, {}};
  const auto fb = flow_for(bm, 50, 1, 0);
  auto q = quadratic_form_decomposition(fb, bm.system, spec.step_sizes(), Vec::Ones(1));
  CHECK(q.matrix_route == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(q.z_route == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(quadratic_form_decomposition(fb, bm.system, spec.step_sizes(), Vec::Constant(1, 2.0)), InputError);

  const auto gm = make_scenario("geometric");
  const auto fg = flow_for(gm, 1000, 1, 0);
  q = quadratic_form_decomposition(fg, gm.system, GridSpec{1.0, 1000, 1, {}}.step_sizes(), Vec::Ones(1));
  CHECK(q.matrix_route == doctest::Approx(1.0).epsilon(0.01));
  CHECK(q.relative_gap <= 1e-10);
}

TEST_CASE("z process examples") {
  ScenarioParams p;
  p.dimension = 2;
  const auto bm = make_scenario("brownian", p);
  const auto flow = flow_for(bm, 30, 2, 0);
  Vec eta(2);
  eta << 0.6, 0.8;
  for (double z : z_process(flow, eta, bm.system.field(1))) CHECK(z == doctest::Approx(0.6).epsilon(1e-15));

  for (const auto& name : scenario_names()) {
    const auto sc = make_scenario(name);
    const int n = sc.system.dimension();
    const Vec e = Vec::Ones(n).normalized();
    const auto f = flow_for(sc, 40, 3, 1);
    for (int j = 0; j <= sc.system.noise_count(); ++j) {
      const auto z = z_process(f, e, sc.system.field(j));
      CHECK(z.size() == 41);
      CHECK(z[0] == e.dot(sc.system.field(j).eval(sc.x0)));
    }
  }
}

namespace {

// Slope of the regression of one-step Z_F increments on the Ito drift
// Z_{[V0,F]} + 1/2 sum Z_{[V_k,[V_k,F]]} times dt, pooled over paths and steps.
double z_drift_slope(const Scenario& sc, const VectorField& f, std::size_t steps, std::size_t paths) {
  const auto& sys = sc.system;
  std::vector<VectorField> drift_parts{lie_bracket(sys.field(0), f)};
  for (int k = 1; k <= sys.noise_count(); ++k) {
    drift_parts.push_back(lie_bracket(sys.field(k), lie_bracket(sys.field(k), f)) * 0.5);
  }
  VectorField drift = drift_parts[0];
  for (std::size_t i = 1; i < drift_parts.size(); ++i) drift = drift + drift_parts[i];
  const Vec eta = Vec::Ones(sys.dimension()).normalized();
  const double dt = 1.0 / static_cast<double>(steps);
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t p = 0; p < paths; ++p) {
    const auto flow = flow_for(sc, steps, 17, p);
    const auto z = z_process(flow, eta, f);
    const auto a = z_process(flow, eta, drift);
    for (std::size_t k = 0; k < steps; ++k) {
      sxy += (z[k + 1] - z[k]) * a[k] * dt;
      sxx += a[k] * dt * a[k] * dt;
    }
  }
  return sxy / sxx;
}

}  // namespace

TEST_CASE("z process drift regression") {
  const auto lv = make_scenario("langevin");
  CHECK(std::abs(z_drift_slope(lv, lv.system.field(1), 100, 10000) - 1.0) < 0.05);
  // Multiplicative noise: the noise term Z_{[V1,F]} dW is present.
  const auto ce = make_scenario("counterexample");
  const auto f = VectorField::parse("x^2 + 1", {"x"}, "F");
  CHECK(std::abs(z_drift_slope(ce, f, 100, 10000) - 1.0) < 0.05);
}

TEST_CASE("scaling report on a synthetic law with slope 2") {
  // P(sqrt(U) < eps) = eps^2
  std::vector<double> v;
  for (std::size_t p = 0; p < 200000; ++p) v.push_back(std::sqrt(uniform01(1, p, 0, 0)));
  TailOptions opt;
  opt.epsilons = dyadic_epsilons(-8, 0);
  opt.fit_lo = std::ldexp(1.0, -6);
  opt.fit_hi = std::ldexp(1.0, -1);
  const auto rep = scaling_report(v, 0, opt);
  CHECK(rep.status == TailStatus::Fitted);
  CHECK(rep.slope == doctest::Approx(2.0).epsilon(0.05));
  for (const auto& b : rep.bins) {
    CHECK(b.p_lo <= b.p_hat);
    CHECK(b.p_hat <= b.p_hi);
    CHECK(b.p_lo >= 0.0);
    CHECK(b.p_hi <= 1.0);
    const double p = std::min(1.0, b.epsilon * b.epsilon);
    CHECK(b.p_lo <= p * 1.2);
    CHECK(b.p_hi >= p * 0.8);
  }

  // Too few tail hits: censored, not a failure.
  std::vector<double> few(v.begin(), v.begin() + 2000);
  opt.fit_hi = std::ldexp(1.0, -4);
  CHECK(scaling_report(few, 0, opt).status == TailStatus::Censored);

  // Clopper-Pearson with zero hits in n trials: upper bound 1 - (alpha/2)^(1/n).
  std::vector<double> ones(1000, 1.0);
  const auto z = scaling_report(ones, 0, opt);
  CHECK(z.status == TailStatus::NoTailMass);
  CHECK(z.bins.front().p_hi == doctest::Approx(1.0 - std::pow(0.025, 1.0 / 1000)).epsilon(1e-9));
}

TEST_CASE("tail scaling separates degenerate from non-degenerate") {
  TailOptions opt;
  opt.epsilons = dyadic_epsilons(-14, -1);
  opt.fit_lo = std::ldexp(1.0, -14);
  opt.fit_hi = std::ldexp(1.0, -6);
  opt.paths = 1000;
  opt.grid = GridSpec{1.0, 50, 1, {}};
  opt.seed = 3;

  ScenarioParams p2;
  p2.dimension = 2;
  const auto bm = make_scenario("brownian", p2);
  opt.policy = EtaPolicy::axes_and_random(2);
  auto rep = tail_scaling(bm.system, bm.x0, opt);
  for (const auto& b : rep.bins) CHECK(b.hits == 0);
  CHECK(rep.status == TailStatus::NoTailMass);

  const auto dg = make_scenario("degenerate");
  rep = tail_scaling(dg.system, dg.x0, opt);
  CHECK(rep.status == TailStatus::Floor);
  for (const auto& b : rep.bins) CHECK(b.p_lo > 0.9);

  const auto lv = make_scenario("langevin");
  rep = tail_scaling(lv.system, lv.x0, opt);
  CHECK(rep.status != TailStatus::Floor);
  CHECK(rep.min_lambda > 0.1);

  opt.paths = 10;
  CHECK_THROWS_AS(tail_scaling(lv.system, lv.x0, opt), InputError);
}

TEST_CASE("tail scaling is independent of the execution mode") {
  const auto ce = make_scenario("counterexample");
  TailOptions opt;
  opt.epsilons = dyadic_epsilons(-4, 4);
  opt.fit_lo = 1.0;
  opt.fit_hi = 16.0;
  opt.paths = 1000;
  opt.grid = GridSpec{1.0, 40, 1, {}};
  opt.policy = EtaPolicy::axes_and_random(1, 2);
  opt.exec = {Execution::Serial};
  const auto a = tail_scaling(ce.system, ce.x0, opt);
  opt.exec = {Execution::Parallel, 4};
  const auto b = tail_scaling(ce.system, ce.x0, opt);
  for (std::size_t i = 0; i < a.bins.size(); ++i) CHECK(a.bins[i].hits == b.bins[i].hits);
  CHECK(a.min_lambda == b.min_lambda);
}

TEST_CASE("inverse moments") {
  ScenarioParams p;
  p.dimension = 2;
  const auto bm = make_scenario("brownian", p);
  auto ens = covariance_ensemble(bm.system, bm.x0, GridSpec{1.0, 20, 2, {}}, 200, 1);
  std::vector<CovarianceSample> samples;
  for (auto& v : ens.values) samples.push_back(*v);
  for (double pw : {1.0, 2.0, 5.0}) {
    const auto r = inverse_moment_estimate(samples, pw);
    CHECK(r.estimate == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.used == 200);
  }

  const auto gm = make_scenario("geometric");
  ens = covariance_ensemble(gm.system, gm.x0, GridSpec{1.0, 1000, 1, {}}, 200, 1);
  samples.clear();
  for (auto& v : ens.values) samples.push_back(*v);
  CHECK(inverse_moment_estimate(samples, 2.0).estimate == doctest::Approx(1.0).epsilon(0.02));

  const auto r = inverse_moment_estimate(std::vector<double>{1e-20, 0.05, 0.5, 2.0, 3.0}, 1.0);
  CHECK(r.excluded == 1);
  CHECK(r.used == 4);
  REQUIRE(r.decades.size() == 3);
  CHECK(r.decades[0].exponent == -2);
  CHECK(r.decades[0].share == doctest::Approx(20.0 / (20 + 2 + 0.5 + 1.0 / 3)));
  CHECK_THROWS_AS(inverse_moment_estimate(std::vector<double>{1.0}, 0.0), InputError);
}

TEST_CASE("probe pieces match bump derivatives of the Heun map") {
  for (const char* name : {"langevin", "counterexample", "geometric"}) {
    const auto sc = make_scenario(name);
    const int n = sc.system.dimension();
    GridSpec spec{1.0, 16, 1, {}};
    const auto incs = sample_increments(spec, 4, 2);
    const auto s = probe_sample(sc.system, sc.x0, incs, 0, 1e-4);
    KernelScratch ks;
    INFO(name);
    CHECK((s.terminal - integrate_terminal(sc.system, sc.x0, incs, Scheme::StratonovichHeun, ks)).norm() <= 1e-13);
    // Oracle: D_k X by central bumps, M = sum D_k X D_k X^T dt.
    std::vector<Vec> dx;
    Mat m = Mat::Zero(n, n);
    for (std::size_t k = 0; k < 16; ++k) {
      dx.push_back(bump_derivative(sc.system, sc.x0, incs, k, 1, 1e-5));
      m += dx.back() * dx.back().transpose() * incs.dt[k];
    }
    CHECK((s.malliavin - m).norm() <= 1e-7 * m.norm());
    const Vec y = m.ldlt().solve(Vec::Unit(n, 0));
    for (std::size_t k = 0; k < 16; ++k) CHECK(s.u[k] == doctest::Approx(dx[k].dot(y)).epsilon(1e-6));
  }
}

TEST_CASE("probe correction term") {
  // Brownian: u = e_j for every increment, no correction.
  ScenarioParams p;
  p.dimension = 2;
  const auto bm = make_scenario("brownian", p);
  GridSpec spec{1.0, 8, 2, {}};
  const auto incs = sample_increments(spec, 1, 1);
  const auto s = probe_sample(bm.system, bm.x0, incs, 1, 1e-4);
  double w2 = 0;
  for (std::size_t k = 0; k < 8; ++k) {
    CHECK(s.u[2 * k] == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(s.u[2 * k + 1] == doctest::Approx(1.0).epsilon(1e-12));
    w2 += incs.w(k, 1);
  }
  for (double d : s.du) CHECK(std::abs(d) <= 1e-7);
  CHECK(s.skorokhod == doctest::Approx(w2).epsilon(1e-9));

  // Nonlinear: d_k u_k from bumps of the full estimator.
  const auto ce = make_scenario("counterexample");
  GridSpec g1{1.0, 6, 1, {}};
  auto inc = sample_increments(g1, 2, 0);
  const auto base = probe_sample(ce.system, ce.x0, inc, 0, 1e-4);
  for (std::size_t k = 0; k < 6; ++k) {
    auto up = inc;
    auto dn = inc;
    up.w(k, 0) += 1e-4;
    dn.w(k, 0) -= 1e-4;
    const double fd = (probe_sample(ce.system, ce.x0, up, 0, 1e-4).u[k] - probe_sample(ce.system, ce.x0, dn, 0, 1e-4).u[k]) / 2e-4;
    CHECK(base.du[k] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("density probe examples at small sample size") {
  struct Case {
    const char* scenario;
    const char* g;
    int j;
    int dim;
  };
  for (Case c : {Case{"brownian", "x1^2", 0, 1}, Case{"brownian", "x1", 1, 2}, Case{"langevin", "sin(q)", 0, 2}}) {
    ScenarioParams p;
    p.dimension = c.dim;
    const auto sc = make_scenario(c.scenario, p);
    ProbeOptions o;
    o.direction = c.j;
    o.grid = GridSpec{1.0, 32, 1, {}};
    o.paths = 2000;
    o.seed = 8;
    const auto r = ibp_density_probe(sc.system, sc.x0, parse_expression(c.g, named_symbols(sc.system.names())), o);
    INFO(c.scenario, " ", c.g);
    CHECK(std::abs(r.z) < 4);
    CHECK(r.excluded == 0);
  }
  const auto dg = make_scenario("degenerate");
  ProbeOptions o;
  o.grid = GridSpec{1.0, 8, 1, {}};
  o.paths = 100;
  CHECK_THROWS_AS(ibp_density_probe(dg.system, dg.x0, Expr::variable(0), o), NumericalAbort);
}

TEST_CASE("kde examples") {
  // Brownian terminal values at T = 1.
  const auto bm = make_scenario("brownian");
  GridSpec spec{1.0, 4, 1, {}};
  KernelScratch ks;
  std::vector<double> x;
  for (std::size_t p = 0; p < 1000000; ++p) {
    x.push_back(integrate_terminal(bm.system, bm.x0, sample_increments(spec, 21, p), Scheme::StratonovichHeun, ks)[0]);
  }
  std::vector<double> grid;
  for (int i = -400; i <= 400; ++i) grid.push_back(i * 0.01);
  const auto d = kde_density(x, 0.05, grid);
  double sup = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    sup = std::max(sup, std::abs(d[i] - std::exp(-0.5 * grid[i] * grid[i]) / std::sqrt(2 * std::numbers::pi)));
  }
  CHECK(sup < 0.01);

  // Closed-form outside mass against a Riemann sum of the estimate.
  std::vector<double> wide;
  for (int i = -800; i <= 800; ++i) wide.push_back(i * 0.01);
  const std::vector<double> few(x.begin(), x.begin() + 20000);
  const auto dw = kde_density(few, 0.05, wide);
  double inside = 0;
  for (std::size_t i = 0; i < wide.size(); ++i) {
    if (std::abs(wide[i]) <= 1.0) inside += dw[i] * 0.01 * (std::abs(wide[i]) == 1.0 ? 0.5 : 1.0);
  }
  CHECK(kde_mass_outside(few, 0.05, -1.0, 1.0) == doctest::Approx(1.0 - inside).epsilon(1e-3));

  // Parallel and serial agree bit for bit.
  CHECK(kde_density(few, 0.1, grid, {Execution::Serial}) == kde_density(few, 0.1, grid, {Execution::Parallel, 4}));

  // Degenerate x2 is a point mass: the peak grows like 1/h.
  std::vector<double> x2(1000, 0.0);
  const std::vector<double> at0{0.0};
  CHECK(kde_density(x2, 0.01, at0)[0] == doctest::Approx(1.0 / (0.01 * std::sqrt(2 * std::numbers::pi))));
  CHECK(kde_density(x2, 0.001, at0)[0] == doctest::Approx(10 * kde_density(x2, 0.01, at0)[0]));
  CHECK_THROWS_AS(kde_density(x2, 0.0, at0), InputError);
}
