// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>

#include "malliavin/errors.hpp"
#include "malliavin/norris.hpp"
#include "malliavin/scenarios.hpp"

using namespace malliavin;

namespace {

std::vector<double> grid_values(std::size_t n, double (*f)(double)) {
  std::vector<double> v(n + 1);
  for (std::size_t i = 0; i <= n; ++i) v[i] = f(static_cast<double>(i) / static_cast<double>(n));
  return v;
}

GridSpec unit_grid(std::size_t steps, int m) {
  GridSpec g;
  g.steps = steps;
  g.noise_count = m;
  return g;
}

}  // namespace

TEST_CASE("hoelder profile basics") {
  auto c = HoelderProfile::compute(std::vector<double>(9, 2.0));
  CHECK(c.holder == 0.0);
  CHECK(c.sup == 2.0);
  // f = t with alpha = 1: constant 1; alpha = 1/2 gives max sqrt(|t-s|) = 1 at the full span
  auto t = HoelderProfile::compute(grid_values(16, [](double x) { return x; }), 1.0);
  CHECK(t.holder == doctest::Approx(1.0).epsilon(1e-14));
  auto h = HoelderProfile::compute(grid_values(16, [](double x) { return x; }), 0.5);
  CHECK(h.holder == doctest::Approx(1.0).epsilon(1e-14));
  // sqrt(t) is exactly 1/2-Hoelder with constant 1, attained at s = 0
  auto r = HoelderProfile::compute(grid_values(64, [](double x) { return std::sqrt(x); }), 0.5);
  CHECK(r.holder == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(r.stride == 1);
  auto big = HoelderProfile::compute(std::vector<double>(10001, 0.0));
  CHECK(big.stride == 3);
  CHECK_THROWS_AS(HoelderProfile::compute({1.0}), InputError);
  CHECK_THROWS_AS(HoelderProfile::compute({1.0, 2.0}, 0.0), InputError);
  CHECK_THROWS_AS(HoelderProfile::compute({1.0, NAN}), InputError);
}

TEST_CASE("check_dtf examples") {
  const std::size_t n = 1024;
  std::vector<double> ones(n + 1, 3.0);
  auto c = check_dtf(ones, std::vector<double>(n + 1, 0.0));
  CHECK(c.lhs == 0.0);
  CHECK(c.slack == doctest::Approx(12.0));
  auto t = check_dtf(grid_values(n, [](double x) { return x; }), std::vector<double>(n + 1, 1.0));
  CHECK(t.lhs == 1.0);
  CHECK(t.rhs == doctest::Approx(4.0));
  CHECK(t.slack == doctest::Approx(3.0));
  for (double w : {4.0, 16.0, 64.0}) {
    std::vector<double> f(n + 1);
    std::vector<double> d(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
      const double x = static_cast<double>(i) / n;
      f[i] = std::sin(w * x) / w;
      d[i] = std::cos(w * x);
    }
    const auto r = check_dtf(f, d);
    CHECK(r.slack >= 0.0);
    CHECK(r.lhs == doctest::Approx(1.0).epsilon(1e-3));
  }
  CHECK_THROWS_AS(check_dtf(std::vector<double>(5, 0.0), std::vector<double>(5, 1.0)), InputError);
  CHECK(check_dtf(std::vector<double>(5, 0.0), std::vector<double>(5, 0.0)).slack == 0.0);
  CHECK_THROWS_AS(check_dtf(std::vector<double>(5, 1.0), std::vector<double>(4, 0.0)), InputError);
}

TEST_CASE("dtf corpus: slack and refinement monotonicity") {
  const auto corpus = dtf_corpus(7);
  REQUIRE(corpus.size() == 200);
  double min_slack = 1e300;
  for (const auto& fn : corpus) {
    const auto [v, d] = sample_function(fn, 2048);
    const auto r = check_dtf(v, d);
    min_slack = std::min(min_slack, r.slack);
    double prev = -1.0;
    for (std::size_t n : {256, 512, 1024}) {
      const auto h = HoelderProfile::compute(sample_function(fn, n).first).holder;
      CHECK(h >= prev);
      prev = h;
    }
  }
  CHECK(min_slack >= 0.0);
}

TEST_CASE("spline corpus derivatives match finite differences") {
  const auto corpus = dtf_corpus(3);
  for (std::size_t i = 118; i < corpus.size(); i += 7) {
    for (double t : {0.1, 0.37, 0.81}) {
      const double fd = (corpus[i].f(t + 1e-6) - corpus[i].f(t - 1e-6)) / 2e-6;
      CHECK(corpus[i].df(t) == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
    }
  }
}

TEST_CASE("deterministic implication fixture") {
  // Z_t = e0 t: ||Z|| = e0, A = e0, B = 0
  const double e0 = 0.01;
  std::vector<PathSups> sups(20, PathSups{e0, e0, 0.0});
  ImplicationOptions opt;
  for (int k = 0; k <= 12; ++k) opt.epsilons.push_back(std::pow(2.0, -k));
  const auto tabs = implication_tables(sups, opt);
  REQUIRE(tabs.size() == 4);
  for (const auto& t : tabs) {
    for (const auto& b : t.bins) {
      const bool a = b.epsilon > e0;
      const bool bb = e0 < std::pow(b.epsilon, t.r);
      CHECK(b.count_a == (a ? 20u : 0u));
      CHECK(b.count_b == (bb ? 20u : 0u));
      CHECK(b.count_a_not_b == (a && !bb ? 20u : 0u));
      CHECK(b.count_a_not_b <= b.count_a);
      CHECK(b.censored == !a);
    }
    // eps > e0 implies eps^r > eps > e0: no violations anywhere
    CHECK(t.status == DecayStatus::NoViolations);
  }
  // with A = 0.9 the implication fails for moderate eps at small r
  std::vector<PathSups> bad(20, PathSups{e0, 0.9, 0.0});
  const auto t2 = implication_tables(bad, opt);
  for (const auto& b : t2[0].bins) {
    const bool a = b.epsilon > e0;
    const bool bb = 0.9 < std::pow(b.epsilon, 1.0 / 80);
    CHECK(b.count_a_not_b == (a && !bb ? 20u : 0u));
    CHECK(b.p_violation <= b.p_a);
  }
}

TEST_CASE("brownian with constant F: A = B = 0 and Z constant") {
  const auto sc = make_scenario("brownian");
  NorrisOptions opt;
  opt.grid = unit_grid(64, 1);
  opt.paths = 200;
  opt.seed = 5;
  opt.events.epsilons = {0.05, 0.1, 0.2, 0.4, 0.8};
  const auto res = norris_scaling(sc.system, sc.x0, sc.system.field(1), opt);
  for (const auto& s : res.sups) {
    CHECK(s.a == 0.0);
    CHECK(s.b == 0.0);
    CHECK(s.z == doctest::Approx(1.0));  // |eta| = 1 in one dimension
  }
  CHECK(res.reconstruction_error == 0.0);
  for (const auto& t : res.tables) {
    for (const auto& b : t.bins) {
      CHECK(b.count_a == 0);
      CHECK(b.count_a_not_b == 0);
      CHECK(b.censored);
    }
    CHECK(t.status == DecayStatus::Censored);
  }
}

TEST_CASE("Z_F reconstruction from bracket processes") {
  for (const std::string name : {"langevin", "counterexample", "geometric"}) {
    const auto sc = make_scenario(name);
    const VectorField f = sc.system.field(1) + sc.system.drift() * 0.5;
    double prev = 0.0;
    for (std::size_t steps : {100, 1000}) {
      NorrisOptions opt;
      opt.grid = unit_grid(steps, 1);
      opt.paths = 50;
      opt.seed = 11;
      opt.events.epsilons = {0.5};
      const auto res = norris_scaling(sc.system, sc.x0, f, opt);
      const double h = 1.0 / static_cast<double>(steps);
      INFO(name << " steps " << steps << " err " << res.reconstruction_error);
      // one-step error is O(h^1.5) against increments of size sqrt(h)
      CHECK(res.reconstruction_error <= 20.0 * std::pow(h, 1.5) * std::max(1.0, res.z_scale));
      if (prev > 0.0) CHECK(res.reconstruction_error < prev / 5.0);
      prev = res.reconstruction_error;
    }
  }
}

TEST_CASE("norris scaling: serial equals parallel") {
  const auto sc = make_scenario("counterexample");
  NorrisOptions opt;
  opt.grid = unit_grid(64, 1);
  opt.paths = 300;
  opt.seed = 2;
  opt.events.epsilons = {0.25, 0.5, 1.0};
  opt.exec.execution = Execution::Serial;
  const auto a = norris_scaling(sc.system, sc.x0, sc.system.field(1), opt);
  opt.exec.execution = Execution::Parallel;
  const auto b = norris_scaling(sc.system, sc.x0, sc.system.field(1), opt);
  REQUIRE(a.sups.size() == b.sups.size());
  for (std::size_t i = 0; i < a.sups.size(); ++i) {
    CHECK(a.sups[i].z == b.sups[i].z);
    CHECK(a.sups[i].a == b.sups[i].a);
    CHECK(a.sups[i].b == b.sups[i].b);
  }
  CHECK(a.reconstruction_error == b.reconstruction_error);
}

TEST_CASE("norris input errors") {
  const auto sc = make_scenario("langevin");
  NorrisOptions opt;
  opt.grid = unit_grid(16, 1);
  opt.events.epsilons = {0.5};
  opt.eta = Vec::Ones(2);
  CHECK_THROWS_AS(norris_scaling(sc.system, sc.x0, sc.system.field(1), opt), InputError);
  opt.eta.reset();
  CHECK_THROWS_AS(norris_scaling(sc.system, sc.x0, VectorField::zero(3), opt), InputError);
  opt.events.r_grid = {1.5};
  CHECK_THROWS_AS(norris_scaling(sc.system, sc.x0, sc.system.field(1), opt), InputError);
}

TEST_CASE("cascade: brownian, degenerate, langevin") {
  CascadeOptions opt;
  opt.grid = unit_grid(64, 1);
  opt.paths = 400;
  opt.seed = 9;
  {
    ScenarioParams p;
    p.dimension = 2;
    const auto sc = make_scenario("brownian", p);
    opt.grid.noise_count = 2;
    opt.epsilon = 0.999;
    const auto t = hormander_cascade(sc.system, sc.x0, opt);
    CHECK(t.censored);
    CHECK(t.conditioned == 0);
    CHECK(t.p_hi < 0.01);
  }
  {
    const auto sc = make_scenario("degenerate");
    opt.grid.noise_count = 1;
    opt.epsilon = 1e-3;
    opt.eta = Vec::Unit(2, 1);
    const auto t = hormander_cascade(sc.system, sc.x0, opt);
    CHECK(t.conditioned == t.paths);
    CHECK(t.p_lo > 0.9);
    bool zero_generation = false;
    for (const auto& r : t.rows) {
      if (r.generation >= 1 && r.zero) {
        zero_generation = true;
        CHECK(r.median == 0.0);
      }
    }
    CHECK(zero_generation);
    opt.eta.reset();
  }
  {
    const auto sc = make_scenario("langevin");
    opt.levels = 1;
    opt.epsilon = 0.5;
    const auto t = hormander_cascade(sc.system, sc.x0, opt);
    CHECK_FALSE(t.censored);
    bool found = false;
    for (const auto& r : t.rows) {
      if (r.generation == 1 && !r.zero) {
        found = true;
        CHECK(r.median <= r.unconditioned_median);
      }
    }
    CHECK(found);
  }
}
