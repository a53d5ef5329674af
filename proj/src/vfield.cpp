// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
#include "malliavin/vfield.hpp"

#include <algorithm>

#include "malliavin/errors.hpp"
#include "malliavin/parser.hpp"

namespace malliavin {

VectorField::VectorField(std::vector<Expr> components, std::string label)
    : components_(std::move(components)), label_(std::move(label)) {
  if (components_.empty()) throw InputError("vector field needs at least one component");
  const int n = dimension();
  for (const auto& c : components_) {
    auto vars = c.variables();
    if (!vars.empty() && vars.back() >= n) {
      throw InputError("component references x" + std::to_string(vars.back() + 1) + " in a field of dimension " +
                       std::to_string(n));
    }
  }
}

VectorField VectorField::parse(std::string_view text, const std::vector<std::string>& names, std::string label) {
  auto comps = parse_components(text, named_symbols(names));
  if (comps.size() != names.size()) {
    throw InputError("field has " + std::to_string(comps.size()) + " components but " + std::to_string(names.size()) +
                     " variables");
  }
  return VectorField(std::move(comps), std::move(label));
}

VectorField VectorField::zero(int n, std::string label) {
  return VectorField(std::vector<Expr>(n, Expr::constant(0.0)), std::move(label));
}

VectorField VectorField::constant(const Vec& v, std::string label) {
  std::vector<Expr> c;
  for (Eigen::Index i = 0; i < v.size(); ++i) c.push_back(Expr::constant(v[i]));
  return VectorField(std::move(c), std::move(label));
}

VectorField VectorField::relabeled(std::string label) const {
  VectorField out = *this;
  out.label_ = std::move(label);
  return out;
}

bool VectorField::is_zero() const {
  return std::all_of(components_.begin(), components_.end(), [](const Expr& e) { return e.is_zero(); });
}

Vec VectorField::eval(const Vec& x) const {
  if (x.size() != dimension()) throw InputError("point dimension does not match field dimension");
  std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
  Vec out(dimension());
  for (int i = 0; i < dimension(); ++i) out[i] = evaluate(components_[i], xs);
  return out;
}

std::vector<Expr> VectorField::jacobian() const {
  const int n = dimension();
  std::vector<Expr> out;
  out.reserve(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) out.push_back(derivative(components_[i], j));
  }
  return out;
}

Mat VectorField::jacobian_at(const Vec& x) const {
  if (x.size() != dimension()) throw InputError("point dimension does not match field dimension");
  const int n = dimension();
  auto d = jacobian();
  std::span<const double> xs(x.data(), static_cast<std::size_t>(n));
  Mat out(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) out(i, j) = evaluate(d[static_cast<std::size_t>(i) * n + j], xs);
  }
  return out;
}

VectorField VectorField::operator+(const VectorField& other) const {
  if (other.dimension() != dimension()) throw InputError("dimension mismatch in field sum");
  std::vector<Expr> c;
  for (int i = 0; i < dimension(); ++i) c.push_back(components_[i] + other.components_[i]);
  return VectorField(std::move(c));
}

VectorField VectorField::operator*(double s) const {
  std::vector<Expr> c;
  for (const auto& e : components_) c.push_back(s * e);
  return VectorField(std::move(c));
}

CompiledFields::CompiledFields(std::span<const VectorField> fields) : count_(fields.size()) {
  if (fields.empty()) throw InputError("no fields to compile");
  n_ = fields[0].dimension();
  std::vector<Expr> outs;
  for (const auto& f : fields) {
    if (f.dimension() != n_) throw InputError("all fields must share one dimension");
    outs.insert(outs.end(), f.components().begin(), f.components().end());
  }
  tape_ = Tape(outs);
}

void CompiledFields::eval(const double* x, double* out, std::vector<double>& scratch) const {
  tape_.evaluate(std::span<const double>(x, static_cast<std::size_t>(n_)),
                 std::span<double>(out, count_ * static_cast<std::size_t>(n_)), scratch);
}

VectorField lie_bracket(const VectorField& u, const VectorField& v) {
  if (u.dimension() != v.dimension()) throw InputError("dimension mismatch in Lie bracket");
  const int n = u.dimension();
  std::vector<Expr> c;
  c.reserve(n);
  for (int i = 0; i < n; ++i) {
    std::vector<Expr> terms;
    terms.reserve(2 * static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
      terms.push_back(derivative(v[i], j) * u[j]);
      terms.push_back(-(derivative(u[i], j) * v[j]));
    }
    c.push_back(sum(std::move(terms)));
  }
  return VectorField(std::move(c), "[" + u.label() + "," + v.label() + "]");
}

Expr apply_operator(const VectorField& u, const Expr& f) {
  std::vector<Expr> terms;
  for (int i = 0; i < u.dimension(); ++i) terms.push_back(u[i] * derivative(f, i));
  return sum(std::move(terms));
}

std::string format_field(const VectorField& f, const std::vector<std::string>& names) {
  NameFn name = [&](int i) {
    return i < static_cast<int>(names.size()) ? names[i] : "x" + std::to_string(i + 1);
  };
  std::string out;
  for (int i = 0; i < f.dimension(); ++i) {
    if (i > 0) out += " ; ";
    out += to_string(f[i], name);
  }
  return out;
}

namespace {

bool contains(const std::vector<VectorField>& gen, const VectorField& f) {
  return std::any_of(gen.begin(), gen.end(), [&](const VectorField& g) { return g == f; });
}

}  // namespace

BracketFamily build_bracket_family(std::span<const VectorField> fields, int max_level, std::size_t generation_cap) {
  if (fields.empty()) throw InputError("bracket family needs at least the drift field");
  if (max_level < 0) throw InputError("bracket level must be non-negative");
  BracketFamily fam;
  fam.dimension = fields[0].dimension();
  fam.noise_count = static_cast<int>(fields.size()) - 1;
  for (const auto& f : fields) {
    if (f.dimension() != fam.dimension) throw InputError("all fields must share one dimension");
  }
  auto label_of = [&](std::size_t i) {
    return fields[i].label().empty() ? "V" + std::to_string(i) : fields[i].label();
  };

  std::vector<VectorField> gen0;
  std::vector<std::string> vanish0;
  for (std::size_t i = 1; i < fields.size(); ++i) {
    VectorField f = fields[i].relabeled(label_of(i));
    if (f.is_zero()) {
      vanish0.push_back(f.label());
    } else if (!contains(gen0, f)) {
      gen0.push_back(std::move(f));
    }
  }
  fam.generations.push_back(gen0);
  fam.vanishing.push_back(vanish0);

  std::size_t fresh_begin = 0;
  for (int level = 0; level < max_level; ++level) {
    const auto& prev = fam.generations.back();
    std::vector<VectorField> next = prev;
    std::vector<std::string> vanish;
    // Brackets of older members already live in prev.
    for (std::size_t u = fresh_begin; u < prev.size(); ++u) {
      for (std::size_t j = 0; j < fields.size(); ++j) {
        VectorField b = lie_bracket(prev[u], fields[j].relabeled(label_of(j)));
        if (b.is_zero()) {
          vanish.push_back(b.label());
          continue;
        }
        if (contains(next, b)) continue;
        next.push_back(std::move(b));
        if (next.size() > generation_cap) {
          throw InputError("bracket generation " + std::to_string(level + 1) + " exceeds the cap of " +
                           std::to_string(generation_cap) + " fields");
        }
      }
    }
    fresh_begin = prev.size();
    fam.generations.push_back(std::move(next));
    fam.vanishing.push_back(std::move(vanish));
  }
  return fam;
}

int spanned_dimension(const BracketFamily& family, int level, const Vec& x, double tol) {
  if (level < 0 || level > family.levels()) throw InputError("bracket level out of range");
  if (tol <= 0) throw InputError("rank tolerance must be positive");
  const auto& gen = family.generations[level];
  if (gen.empty()) return 0;
  Mat cols(family.dimension, static_cast<Eigen::Index>(gen.size()));
  for (std::size_t k = 0; k < gen.size(); ++k) cols.col(static_cast<Eigen::Index>(k)) = gen[k].eval(x);
  Eigen::JacobiSVD<Mat> svd(cols);
  const Vec& s = svd.singularValues();
  if (s.size() == 0 || s[0] == 0.0) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > tol * std::max(1.0, s[0])) ++rank;
  }
  return rank;
}

HormanderResult check_parabolic_hormander(std::span<const VectorField> fields, const Vec& x, int max_level, double tol,
                                          std::size_t generation_cap) {
  if (max_level < 1) throw InputError("K_max must be at least 1");
  HormanderResult out;
  out.family = build_bracket_family(fields, max_level, generation_cap);
  const int n = out.family.dimension;
  for (int k = 0; k <= max_level; ++k) {
    int d = spanned_dimension(out.family, k, x, tol);
    out.dimensions.push_back(d);
    if (d == n) {
      out.level = k;
      break;
    }
  }
  return out;
}

}  // namespace malliavin
