// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Hash-consed symbolic expressions over indexed real variables.
//
// Every Expr is an immutable node in a process-wide table: structurally equal
// canonical expressions share one node, so equality is pointer equality and
// common subgraphs are stored once. Construction canonicalizes:
//   - sums and products are flattened, constants folded, operands ordered by
//     a deterministic structural hash;
//   - like terms combine (x - x -> 0, x*x -> x^2) and a constant factor is
//     distributed over a sum;
//   - c sin(a)^2 R + c cos(a)^2 R folds to c R;
//   - negation is a -1 coefficient.
// There are no division or root nodes, so every expression is smooth on R^n.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace malliavin {

enum class Op : std::uint8_t { Constant, Variable, Sum, Product, Power, Sin, Cos, Exp };

struct Node {
  Op op = Op::Constant;
  double value = 0.0;  // Constant
  int index = 0;       // Variable id, or exponent of Power
  std::vector<const Node*> args;
  std::uint64_t hash = 0;  // structural, run-independent
  std::vector<int> vars;   // sorted free variables
};

class Expr {
 public:
  Expr();  // the constant 0
  static Expr constant(double value);
  static Expr variable(int index);

  Op op() const { return node_->op; }
  double value() const { return node_->value; }
  int index() const { return node_->index; }
  std::size_t arity() const { return node_->args.size(); }
  Expr arg(std::size_t i) const { return Expr(node_->args[i]); }
  std::uint64_t hash() const { return node_->hash; }
  const Node* node() const { return node_; }
  std::span<const int> variables() const { return node_->vars; }

  bool is_constant() const { return node_->op == Op::Constant; }
  bool is_zero() const { return is_constant() && node_->value == 0.0; }
  bool depends_on(int var) const;

  friend bool operator==(const Expr& a, const Expr& b) { return a.node_ == b.node_; }

  explicit Expr(const Node* node) : node_(node) {}

 private:
  const Node* node_;
};

// Deterministic total order used for canonical operand ordering.
int compare(const Expr& a, const Expr& b);
struct ExprLess {
  bool operator()(const Expr& a, const Expr& b) const { return compare(a, b) < 0; }
};

Expr sum(std::vector<Expr> terms);
Expr product(std::vector<Expr> factors);
Expr pow(const Expr& base, int exponent);
Expr sin(const Expr& arg);
Expr cos(const Expr& arg);
Expr exp(const Expr& arg);

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr operator*(const Expr& a, const Expr& b);
Expr operator+(double a, const Expr& b);
Expr operator+(const Expr& a, double b);
Expr operator-(double a, const Expr& b);
Expr operator-(const Expr& a, double b);
Expr operator*(double a, const Expr& b);
Expr operator*(const Expr& a, double b);

// d/dx_var, memoized over the DAG.
Expr derivative(const Expr& e, int var);

// Replaces each variable by the expression returned from `map`.
Expr substitute(const Expr& e, const std::function<Expr(int)>& map);

// Values indexed by variable id; ids beyond the span are an error.
double evaluate(const Expr& e, std::span<const double> values);

// Total degree when the expression is a polynomial, nullopt otherwise.
std::optional<int> polynomial_degree(const Expr& e);

using NameFn = std::function<std::string(int)>;
std::string to_string(const Expr& e, const NameFn& name);
std::string to_string(const Expr& e);  // variables print as v<id>

// Number of interned nodes; useful to watch graph growth in tests.
std::size_t interned_node_count();

// Flat evaluation program for a set of output expressions. Shared
// subexpressions are computed once. Immutable; callers own the scratch.
class Tape {
 public:
  Tape() = default;
  explicit Tape(std::span<const Expr> outputs);

  std::size_t output_count() const { return outputs_.size(); }
  std::size_t instruction_count() const { return code_.size(); }
  int variable_bound() const { return variable_bound_; }

  void evaluate(std::span<const double> vars, std::span<double> out, std::vector<double>& scratch) const;

 private:
  struct Instr {
    Op op;
    int index;
    int first;
    int count;
    double value;
  };
  std::vector<Instr> code_;
  std::vector<int> operands_;
  std::vector<int> outputs_;
  int variable_bound_ = 0;
};

}  // namespace malliavin
