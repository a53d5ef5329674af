// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include "doctest.h"
#include "malliavin/errors.hpp"
#include "malliavin/expr.hpp"
#include "malliavin/parser.hpp"

using namespace malliavin;

namespace {

Expr parse(const char* s, int n = 3) { return parse_expression(s, indexed_symbols('x', n)); }

double fd(const Expr& e, std::vector<double> x, int j, double h = 1e-5) {
  double x0 = x[j];
  x[j] = x0 + h;
  double a = evaluate(e, x);
  x[j] = x0 - h;
  double b = evaluate(e, x);
  return (a - b) / (2 * h);
}

}  // namespace

TEST_CASE("canonical forms are structural") {
  Expr x = Expr::variable(0), y = Expr::variable(1);
  CHECK(x + y == y + x);
  CHECK(x * y == y * x);
  CHECK((x - x).is_zero());
  CHECK(x * x == pow(x, 2));
  CHECK(2.0 * (x + y) == 2.0 * x + 2.0 * y);
  CHECK((x + 1.0) + (y + 2.0) == (x + y) + 3.0);
  CHECK(-(-x) == x);
  CHECK(pow(pow(x, 2), 3) == pow(x, 6));
  CHECK(pow(x, 0) == Expr::constant(1.0));
  CHECK(sin(Expr::constant(0.0)).is_zero());
  CHECK((x * 0.0).is_zero());
  CHECK(cos(x) * sin(x) == sin(x) * cos(x));
  CHECK_THROWS_AS(pow(x, -1), InputError);
}

TEST_CASE("pythagorean folding") {
  Expr x = Expr::variable(0), y = Expr::variable(1);
  CHECK(pow(sin(x), 2) + pow(cos(x), 2) == Expr::constant(1.0));
  CHECK(-pow(cos(x), 2) - pow(sin(x), 2) == Expr::constant(-1.0));
  CHECK(y * pow(sin(x), 2) + y * pow(cos(x), 2) == y);
  Expr mixed = 3.0 * pow(sin(x), 2) + pow(cos(x), 2);
  CHECK(mixed == 1.0 + 2.0 * pow(sin(x), 2));
  CHECK(evaluate(mixed, std::vector<double>{0.4}) == doctest::Approx(3 * std::pow(std::sin(0.4), 2) + std::pow(std::cos(0.4), 2)));
}

TEST_CASE("hash is independent of construction order") {
  Expr a = parse("x1*x2 + sin(x3)");
  Expr b = parse("sin(x3) + x2*x1");
  CHECK(a == b);
  CHECK(a.hash() == b.hash());
}

TEST_CASE("derivatives") {
  Expr x = Expr::variable(0), y = Expr::variable(1);
  CHECK(derivative(x * y, 0) == y);
  CHECK(derivative(pow(x, 3), 0) == 3.0 * pow(x, 2));
  CHECK(derivative(sin(x), 0) == cos(x));
  CHECK(derivative(cos(x), 0) == -sin(x));
  CHECK(derivative(exp(2.0 * x), 0) == 2.0 * exp(2.0 * x));
  CHECK(derivative(sin(y), 0).is_zero());
}

TEST_CASE("derivative matches finite differences on random smooth expressions") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const char* corpus[] = {"x1*x2^3 - sin(x1*x3)", "exp(cos(x2) * x1) + x3^4", "sin(x1 + x2 + x3) * cos(x1 - x3)",
                          "(x1 + 2*x2)^5 - 3*x3*x1", "exp(-x1^2) * sin(3*x2)"};
  for (const char* s : corpus) {
    Expr e = parse(s);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> pt{u(rng), u(rng), u(rng)};
      for (int j = 0; j < 3; ++j) {
        double exact = evaluate(derivative(e, j), pt);
        CHECK(exact == doctest::Approx(fd(e, pt, j)).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("tape agrees with recursive evaluation") {
  std::vector<Expr> outs{parse("x1*x2^3 - sin(x1*x3)"), parse("exp(x2) + 4"), parse("x3"), Expr::constant(2.5)};
  Tape tape(outs);
  CHECK(tape.output_count() == 4);
  std::vector<double> pt{0.3, -0.7, 1.1}, out(4), scratch;
  tape.evaluate(pt, out, scratch);
  for (std::size_t i = 0; i < outs.size(); ++i) CHECK(out[i] == doctest::Approx(evaluate(outs[i], pt)).epsilon(1e-15));
}

TEST_CASE("polynomial degree") {
  CHECK(polynomial_degree(parse("x1^2*x2 + x3")) == 3);
  CHECK(polynomial_degree(parse("4")) == 0);
  CHECK(!polynomial_degree(parse("sin(x1)")).has_value());
  CHECK(polynomial_degree(parse("sin(0) + x1")) == 1);
}

TEST_CASE("substitute") {
  Expr e = parse("x1^2");
  Expr s = substitute(e, [](int) { return Expr::variable(0) + Expr::variable(1); });
  CHECK(evaluate(s, std::vector<double>{0.2, 0.3}) == doctest::Approx(0.25));
}

TEST_CASE("parser errors carry line and column") {
  try {
    parse_components("x1 +\n  * x2", indexed_symbols('x', 2));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
    CHECK(e.column() == 3);
  }
  try {
    parse_expression("x1 + y", indexed_symbols('x', 2));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 1);
    CHECK(e.column() == 6);
  }
  CHECK_THROWS_AS(parse_expression("x1^-2", indexed_symbols('x', 1)), ParseError);
  CHECK_THROWS_AS(parse_expression("tan(x1)", indexed_symbols('x', 1)), ParseError);
  CHECK_THROWS_AS(parse_expression("(x1", indexed_symbols('x', 1)), ParseError);
  CHECK_THROWS_AS(parse_expression("x3", indexed_symbols('x', 2)), ParseError);
}

TEST_CASE("parser numbers and precedence") {
  auto r = indexed_symbols('x', 1);
  CHECK(evaluate(parse_expression("1.5e2 - 2*3^2", r), std::vector<double>{0}) == doctest::Approx(132.0));
  CHECK(evaluate(parse_expression("-x1^2", r), std::vector<double>{3}) == doctest::Approx(-9.0));
  CHECK(parse_components("x1 ; -x1 ; 2", r).size() == 3);
}
