// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
#include "malliavin/expr.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>
#include <map>
#include <mutex>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "malliavin/errors.hpp"

namespace malliavin {
namespace {

constexpr std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct NodeKeyHash {
  std::size_t operator()(const Node* n) const {
    std::uint64_t h = mix(static_cast<std::uint64_t>(n->op));
    h = mix(h ^ std::bit_cast<std::uint64_t>(n->value));
    h = mix(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(n->index)));
    for (const Node* a : n->args) h = mix(h ^ reinterpret_cast<std::uintptr_t>(a));
    return static_cast<std::size_t>(h);
  }
};

struct NodeKeyEq {
  bool operator()(const Node* a, const Node* b) const {
    return a->op == b->op && std::bit_cast<std::uint64_t>(a->value) == std::bit_cast<std::uint64_t>(b->value) &&
           a->index == b->index && a->args == b->args;
  }
};

class NodeTable {
 public:
  const Node* intern(Node&& candidate) {
    std::lock_guard lock(mutex_);
    if (auto it = index_.find(&candidate); it != index_.end()) return *it;
    candidate.hash = structural_hash(candidate);
    candidate.vars = free_variables(candidate);
    Node& stored = storage_.emplace_back(std::move(candidate));
    index_.insert(&stored);
    return &stored;
  }

  std::size_t size() {
    std::lock_guard lock(mutex_);
    return storage_.size();
  }

 private:
  static std::uint64_t structural_hash(const Node& n) {
    std::uint64_t h = mix(static_cast<std::uint64_t>(n.op) + 1);
    h = mix(h ^ std::bit_cast<std::uint64_t>(n.value));
    h = mix(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(n.index)));
    for (const Node* a : n.args) h = mix(h * 31 + a->hash);
    return h;
  }

  static std::vector<int> free_variables(const Node& n) {
    if (n.op == Op::Variable) return {n.index};
    std::vector<int> out;
    for (const Node* a : n.args) {
      std::vector<int> merged;
      merged.reserve(out.size() + a->vars.size());
      std::set_union(out.begin(), out.end(), a->vars.begin(), a->vars.end(), std::back_inserter(merged));
      out.swap(merged);
    }
    return out;
  }

  std::mutex mutex_;
  std::deque<Node> storage_;
  std::unordered_set<const Node*, NodeKeyHash, NodeKeyEq> index_;
};

NodeTable& table() {
  static NodeTable t;
  return t;
}

Expr make_node(Op op, double value, int index, std::vector<const Node*> args) {
  Node n;
  n.op = op;
  n.value = value;
  n.index = index;
  n.args = std::move(args);
  return Expr(table().intern(std::move(n)));
}

std::vector<const Node*> nodes_of(const std::vector<Expr>& v) {
  std::vector<const Node*> out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(e.node());
  return out;
}

// Coefficient and remaining monomial of a sum term.
std::pair<double, Expr> split_coefficient(const Expr& t) {
  if (t.op() == Op::Product && t.arg(0).is_constant()) {
    if (t.arity() == 2) return {t.arg(0).value(), t.arg(1)};
    std::vector<const Node*> rest(t.node()->args.begin() + 1, t.node()->args.end());
    return {t.arg(0).value(), make_node(Op::Product, 0.0, 0, std::move(rest))};
  }
  return {1.0, t};
}

double ipow(double x, int k) {
  double r = 1.0;
  while (k > 0) {
    if (k & 1) r *= x;
    x *= x;
    k >>= 1;
  }
  return r;
}

}  // namespace

Expr product(std::vector<Expr> factors);

namespace {

// For a monomial holding sin(a)^k, k >= 2: (R, R cos(a)^2) where the monomial is R sin(a)^2.
std::optional<std::pair<Expr, Expr>> pythagorean_split(const Expr& mono) {
  std::vector<Expr> factors;
  if (mono.op() == Op::Product) {
    for (std::size_t i = 0; i < mono.arity(); ++i) factors.push_back(mono.arg(i));
  } else {
    factors.push_back(mono);
  }
  for (std::size_t i = 0; i < factors.size(); ++i) {
    const Expr& f = factors[i];
    if (f.op() != Op::Power || f.index() < 2 || f.arg(0).op() != Op::Sin) continue;
    std::vector<Expr> rest;
    for (std::size_t j = 0; j < factors.size(); ++j) {
      if (j != i) rest.push_back(factors[j]);
    }
    rest.push_back(pow(f.arg(0), f.index() - 2));
    Expr r = product(rest);
    Expr partner = product({r, pow(cos(f.arg(0).arg(0)), 2)});
    return std::make_pair(r, partner);
  }
  return std::nullopt;
}

}  // namespace

Expr::Expr() : node_(constant(0.0).node_) {}

Expr Expr::constant(double value) {
  if (!std::isfinite(value)) throw InputError("non-finite constant in expression");
  if (value == 0.0) value = 0.0;  // drop the sign of -0
  return make_node(Op::Constant, value, 0, {});
}

Expr Expr::variable(int index) {
  if (index < 0) throw InputError("negative variable index");
  return make_node(Op::Variable, 0.0, index, {});
}

bool Expr::depends_on(int var) const {
  return std::binary_search(node_->vars.begin(), node_->vars.end(), var);
}

int compare(const Expr& a, const Expr& b) {
  if (a == b) return 0;
  if (a.hash() != b.hash()) return a.hash() < b.hash() ? -1 : 1;
  if (a.op() != b.op()) return a.op() < b.op() ? -1 : 1;
  if (a.value() != b.value()) return a.value() < b.value() ? -1 : 1;
  if (a.index() != b.index()) return a.index() < b.index() ? -1 : 1;
  if (a.arity() != b.arity()) return a.arity() < b.arity() ? -1 : 1;
  for (std::size_t i = 0; i < a.arity(); ++i) {
    if (int c = compare(a.arg(i), b.arg(i)); c != 0) return c;
  }
  return 0;
}

Expr sum(std::vector<Expr> terms) {
  double constant = 0.0;
  std::vector<std::pair<Expr, double>> monomials;
  std::unordered_map<const Node*, std::size_t> slot;
  auto add_term = [&](const Expr& t) {
    if (t.is_constant()) {
      constant += t.value();
      return;
    }
    auto [coef, mono] = split_coefficient(t);
    auto [it, fresh] = slot.try_emplace(mono.node(), monomials.size());
    if (fresh) {
      monomials.emplace_back(mono, coef);
    } else {
      monomials[it->second].second += coef;
    }
  };
  for (const auto& t : terms) {
    if (t.op() == Op::Sum) {
      for (std::size_t i = 0; i < t.arity(); ++i) add_term(t.arg(i));
    } else {
      add_term(t);
    }
  }

  // sin(a)^2 R and cos(a)^2 R with coefficients c1, c2 become c2 R + (c1 - c2) sin(a)^2 R.
  for (std::size_t i = 0; i < monomials.size(); ++i) {
    if (monomials[i].second == 0.0) continue;
    auto split = pythagorean_split(monomials[i].first);
    if (!split) continue;
    auto it = slot.find(split->second.node());
    if (it == slot.end() || monomials[it->second].second == 0.0) continue;
    const double c1 = monomials[i].second;
    const double c2 = monomials[it->second].second;
    std::vector<Expr> rebuilt{Expr::constant(constant), c2 * split->first};
    monomials[i].second = c1 - c2;
    monomials[it->second].second = 0.0;
    for (const auto& [mono, coef] : monomials) {
      if (coef != 0.0) rebuilt.push_back(coef * mono);
    }
    return sum(std::move(rebuilt));
  }

  std::vector<Expr> out;
  out.reserve(monomials.size() + 1);
  for (const auto& [mono, coef] : monomials) {
    if (coef == 0.0) continue;
    out.push_back(coef == 1.0 ? mono : product({Expr::constant(coef), mono}));
  }
  std::sort(out.begin(), out.end(), ExprLess{});
  if (constant != 0.0) out.insert(out.begin(), Expr::constant(constant));
  if (out.empty()) return Expr::constant(0.0);
  if (out.size() == 1) return out.front();
  return make_node(Op::Sum, 0.0, 0, nodes_of(out));
}

Expr product(std::vector<Expr> factors) {
  double coef = 1.0;
  std::vector<std::pair<Expr, int>> powers;
  std::unordered_map<const Node*, std::size_t> slot;
  auto add_factor = [&](const Expr& f) {
    if (f.is_constant()) {
      coef *= f.value();
      return;
    }
    Expr base = f;
    int k = 1;
    if (f.op() == Op::Power) {
      base = f.arg(0);
      k = f.index();
    }
    auto [it, fresh] = slot.try_emplace(base.node(), powers.size());
    if (fresh) {
      powers.emplace_back(base, k);
    } else {
      powers[it->second].second += k;
    }
  };
  for (const auto& f : factors) {
    if (f.op() == Op::Product) {
      for (std::size_t i = 0; i < f.arity(); ++i) add_factor(f.arg(i));
    } else {
      add_factor(f);
    }
  }
  if (coef == 0.0) return Expr::constant(0.0);

  std::vector<Expr> out;
  out.reserve(powers.size() + 1);
  for (const auto& [base, k] : powers) {
    if (k == 0) continue;
    out.push_back(k == 1 ? base : make_node(Op::Power, 0.0, k, {base.node()}));
  }
  std::sort(out.begin(), out.end(), ExprLess{});
  if (out.empty()) return Expr::constant(coef);
  if (coef != 1.0 && out.size() == 1 && out.front().op() == Op::Sum) {
    const Expr& s = out.front();
    std::vector<Expr> scaled;
    scaled.reserve(s.arity());
    for (std::size_t i = 0; i < s.arity(); ++i) scaled.push_back(product({Expr::constant(coef), s.arg(i)}));
    return sum(std::move(scaled));
  }
  if (coef == 1.0 && out.size() == 1) return out.front();
  if (coef != 1.0) out.insert(out.begin(), Expr::constant(coef));
  return make_node(Op::Product, 0.0, 0, nodes_of(out));
}

Expr pow(const Expr& base, int exponent) {
  if (exponent < 0) throw InputError("negative exponents are not representable");
  if (exponent == 0) return Expr::constant(1.0);
  if (exponent == 1) return base;
  if (base.is_constant()) return Expr::constant(ipow(base.value(), exponent));
  if (base.op() == Op::Power) return pow(base.arg(0), base.index() * exponent);
  if (base.op() == Op::Product) {
    std::vector<Expr> f;
    f.reserve(base.arity());
    for (std::size_t i = 0; i < base.arity(); ++i) f.push_back(pow(base.arg(i), exponent));
    return product(std::move(f));
  }
  return make_node(Op::Power, 0.0, exponent, {base.node()});
}

Expr sin(const Expr& a) {
  if (a.is_constant()) return Expr::constant(std::sin(a.value()));
  return make_node(Op::Sin, 0.0, 0, {a.node()});
}

Expr cos(const Expr& a) {
  if (a.is_constant()) return Expr::constant(std::cos(a.value()));
  return make_node(Op::Cos, 0.0, 0, {a.node()});
}

Expr exp(const Expr& a) {
  if (a.is_constant()) return Expr::constant(std::exp(a.value()));
  return make_node(Op::Exp, 0.0, 0, {a.node()});
}

Expr operator+(const Expr& a, const Expr& b) { return sum({a, b}); }
Expr operator-(const Expr& a, const Expr& b) { return sum({a, -b}); }
Expr operator-(const Expr& a) { return product({Expr::constant(-1.0), a}); }
Expr operator*(const Expr& a, const Expr& b) { return product({a, b}); }
Expr operator+(double a, const Expr& b) { return Expr::constant(a) + b; }
Expr operator+(const Expr& a, double b) { return a + Expr::constant(b); }
Expr operator-(double a, const Expr& b) { return Expr::constant(a) - b; }
Expr operator-(const Expr& a, double b) { return a - Expr::constant(b); }
Expr operator*(double a, const Expr& b) { return Expr::constant(a) * b; }
Expr operator*(const Expr& a, double b) { return a * Expr::constant(b); }

namespace {

class Differentiator {
 public:
  explicit Differentiator(int var) : var_(var) {}

  Expr operator()(const Expr& e) {
    if (!e.depends_on(var_)) return Expr::constant(0.0);
    if (auto it = memo_.find(e.node()); it != memo_.end()) return it->second;
    Expr d = compute(e);
    memo_.emplace(e.node(), d);
    return d;
  }

 private:
  Expr compute(const Expr& e) {
    switch (e.op()) {
      case Op::Constant:
        return Expr::constant(0.0);
      case Op::Variable:
        return Expr::constant(e.index() == var_ ? 1.0 : 0.0);
      case Op::Sum: {
        std::vector<Expr> terms;
        for (std::size_t i = 0; i < e.arity(); ++i) terms.push_back((*this)(e.arg(i)));
        return sum(std::move(terms));
      }
      case Op::Product: {
        std::vector<Expr> terms;
        for (std::size_t i = 0; i < e.arity(); ++i) {
          Expr di = (*this)(e.arg(i));
          if (di.is_zero()) continue;
          std::vector<Expr> f;
          f.reserve(e.arity());
          for (std::size_t j = 0; j < e.arity(); ++j) f.push_back(j == i ? di : e.arg(j));
          terms.push_back(product(std::move(f)));
        }
        return sum(std::move(terms));
      }
      case Op::Power: {
        const int k = e.index();
        return product({Expr::constant(k), pow(e.arg(0), k - 1), (*this)(e.arg(0))});
      }
      case Op::Sin:
        return cos(e.arg(0)) * (*this)(e.arg(0));
      case Op::Cos:
        return -(sin(e.arg(0)) * (*this)(e.arg(0)));
      case Op::Exp:
        return e * (*this)(e.arg(0));
    }
    return Expr::constant(0.0);
  }

  int var_;
  std::unordered_map<const Node*, Expr> memo_;
};

Expr rebuild(const Expr& e, std::vector<Expr> args) {
  switch (e.op()) {
    case Op::Sum:
      return sum(std::move(args));
    case Op::Product:
      return product(std::move(args));
    case Op::Power:
      return pow(args[0], e.index());
    case Op::Sin:
      return sin(args[0]);
    case Op::Cos:
      return cos(args[0]);
    case Op::Exp:
      return exp(args[0]);
    default:
      return e;
  }
}

double apply(Op op, int index, double value, std::span<const double> a) {
  switch (op) {
    case Op::Constant:
      return value;
    case Op::Sum: {
      double s = 0.0;
      for (double v : a) s += v;
      return s;
    }
    case Op::Product: {
      double p = 1.0;
      for (double v : a) p *= v;
      return p;
    }
    case Op::Power:
      return ipow(a[0], index);
    case Op::Sin:
      return std::sin(a[0]);
    case Op::Cos:
      return std::cos(a[0]);
    case Op::Exp:
      return std::exp(a[0]);
    case Op::Variable:
      break;
  }
  return 0.0;
}

}  // namespace

Expr derivative(const Expr& e, int var) { return Differentiator(var)(e); }

Expr substitute(const Expr& e, const std::function<Expr(int)>& map) {
  std::unordered_map<const Node*, Expr> memo;
  std::function<Expr(const Expr&)> go = [&](const Expr& x) -> Expr {
    if (x.variables().empty()) return x;
    if (auto it = memo.find(x.node()); it != memo.end()) return it->second;
    Expr r;
    if (x.op() == Op::Variable) {
      r = map(x.index());
    } else {
      std::vector<Expr> args;
      args.reserve(x.arity());
      for (std::size_t i = 0; i < x.arity(); ++i) args.push_back(go(x.arg(i)));
      r = rebuild(x, std::move(args));
    }
    memo.emplace(x.node(), r);
    return r;
  };
  return go(e);
}

double evaluate(const Expr& e, std::span<const double> values) {
  std::unordered_map<const Node*, double> memo;
  std::function<double(const Expr&)> go = [&](const Expr& x) -> double {
    if (x.is_constant()) return x.value();
    if (x.op() == Op::Variable) {
      if (static_cast<std::size_t>(x.index()) >= values.size()) throw InputError("variable index out of range");
      return values[x.index()];
    }
    if (auto it = memo.find(x.node()); it != memo.end()) return it->second;
    std::vector<double> a(x.arity());
    for (std::size_t i = 0; i < x.arity(); ++i) a[i] = go(x.arg(i));
    double r = apply(x.op(), x.index(), 0.0, a);
    memo.emplace(x.node(), r);
    return r;
  };
  return go(e);
}

std::optional<int> polynomial_degree(const Expr& e) {
  std::unordered_map<const Node*, std::optional<int>> memo;
  std::function<std::optional<int>(const Expr&)> go = [&](const Expr& x) -> std::optional<int> {
    if (auto it = memo.find(x.node()); it != memo.end()) return it->second;
    std::optional<int> r;
    switch (x.op()) {
      case Op::Constant:
        r = 0;
        break;
      case Op::Variable:
        r = 1;
        break;
      case Op::Sum:
      case Op::Product: {
        int acc = 0;
        bool ok = true;
        for (std::size_t i = 0; i < x.arity() && ok; ++i) {
          auto d = go(x.arg(i));
          if (!d) {
            ok = false;
          } else {
            acc = x.op() == Op::Sum ? std::max(acc, *d) : acc + *d;
          }
        }
        if (ok) r = acc;
        break;
      }
      case Op::Power:
        if (auto d = go(x.arg(0))) r = *d * x.index();
        break;
      default:
        // Transcendental of a constant-free argument.
        break;
    }
    memo.emplace(x.node(), r);
    return r;
  };
  return go(e);
}

namespace {

int precedence(Op op) {
  switch (op) {
    case Op::Sum:
      return 1;
    case Op::Product:
      return 2;
    case Op::Power:
      return 3;
    default:
      return 4;
  }
}

std::string format_constant(double v) { return fmt::format("{}", v); }

void print(const Expr& e, const NameFn& name, std::string& out);

void print_child(const Expr& child, int parent_prec, const NameFn& name, std::string& out) {
  bool negative_constant = child.is_constant() && child.value() < 0;
  bool wrap = precedence(child.op()) <= parent_prec || (negative_constant && parent_prec >= 2);
  if (wrap) out += '(';
  print(child, name, out);
  if (wrap) out += ')';
}

void print(const Expr& e, const NameFn& name, std::string& out) {
  switch (e.op()) {
    case Op::Constant:
      out += format_constant(e.value());
      return;
    case Op::Variable:
      out += name(e.index());
      return;
    case Op::Sum:
      for (std::size_t i = 0; i < e.arity(); ++i) {
        Expr t = e.arg(i);
        if (i > 0) {
          auto [coef, mono] = split_coefficient(t);
          if (coef < 0) {
            out += " - ";
            if (coef == -1.0) {
              print_child(mono, 1, name, out);
            } else {
              out += format_constant(-coef);
              out += '*';
              print_child(mono, 2, name, out);
            }
            continue;
          }
          out += " + ";
        }
        print_child(t, 1, name, out);
      }
      return;
    case Op::Product: {
      std::size_t start = 0;
      if (e.arg(0).is_constant() && e.arg(0).value() == -1.0) {
        out += '-';
        start = 1;
      }
      for (std::size_t i = start; i < e.arity(); ++i) {
        if (i > start) out += '*';
        print_child(e.arg(i), 2, name, out);
      }
      return;
    }
    case Op::Power:
      print_child(e.arg(0), 3, name, out);
      out += '^';
      out += std::to_string(e.index());
      return;
    case Op::Sin:
    case Op::Cos:
    case Op::Exp:
      out += e.op() == Op::Sin ? "sin(" : e.op() == Op::Cos ? "cos(" : "exp(";
      print(e.arg(0), name, out);
      out += ')';
      return;
  }
}

}  // namespace

std::string to_string(const Expr& e, const NameFn& name) {
  std::string out;
  print(e, name, out);
  return out;
}

std::string to_string(const Expr& e) {
  return to_string(e, [](int i) { return "v" + std::to_string(i); });
}

std::size_t interned_node_count() { return table().size(); }

Tape::Tape(std::span<const Expr> outputs) {
  std::unordered_map<const Node*, int> slot;
  std::function<int(const Node*)> visit = [&](const Node* n) -> int {
    if (auto it = slot.find(n); it != slot.end()) return it->second;
    std::vector<int> args;
    args.reserve(n->args.size());
    for (const Node* a : n->args) args.push_back(visit(a));
    Instr ins{n->op, n->index, static_cast<int>(operands_.size()), static_cast<int>(args.size()), n->value};
    operands_.insert(operands_.end(), args.begin(), args.end());
    if (n->op == Op::Variable) variable_bound_ = std::max(variable_bound_, n->index + 1);
    code_.push_back(ins);
    int id = static_cast<int>(code_.size()) - 1;
    slot.emplace(n, id);
    return id;
  };
  outputs_.reserve(outputs.size());
  for (const auto& e : outputs) outputs_.push_back(visit(e.node()));
}

void Tape::evaluate(std::span<const double> vars, std::span<double> out, std::vector<double>& scratch) const {
  if (static_cast<int>(vars.size()) < variable_bound_) throw InputError("tape evaluated with too few variables");
  scratch.resize(code_.size());
  double* r = scratch.data();
  const int* ops = operands_.data();
  for (std::size_t i = 0; i < code_.size(); ++i) {
    const Instr& ins = code_[i];
    const int* a = ops + ins.first;
    switch (ins.op) {
      case Op::Constant:
        r[i] = ins.value;
        break;
      case Op::Variable:
        r[i] = vars[ins.index];
        break;
      case Op::Sum: {
        double s = r[a[0]];
        for (int j = 1; j < ins.count; ++j) s += r[a[j]];
        r[i] = s;
        break;
      }
      case Op::Product: {
        double p = r[a[0]];
        for (int j = 1; j < ins.count; ++j) p *= r[a[j]];
        r[i] = p;
        break;
      }
      case Op::Power:
        r[i] = ipow(r[a[0]], ins.index);
        break;
      case Op::Sin:
        r[i] = std::sin(r[a[0]]);
        break;
      case Op::Cos:
        r[i] = std::cos(r[a[0]]);
        break;
      case Op::Exp:
        r[i] = std::exp(r[a[0]]);
        break;
    }
  }
  for (std::size_t k = 0; k < outputs_.size(); ++k) out[k] = r[outputs_[k]];
}

}  // namespace malliavin
