// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Symbolic vector fields on R^n, Lie brackets, bracket generations and the
// pointwise parabolic Hörmander rank check.
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "malliavin/expr.hpp"

namespace malliavin {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

class VectorField {
 public:
  VectorField() = default;
  // Throws InputError if a component references a variable id >= n.
  explicit VectorField(std::vector<Expr> components, std::string label = {});

  // Components separated by ';' over the given variable names.
  static VectorField parse(std::string_view text, const std::vector<std::string>& names, std::string label = {});
  static VectorField zero(int n, std::string label = {});
  static VectorField constant(const Vec& v, std::string label = {});

  int dimension() const { return static_cast<int>(components_.size()); }
  const Expr& operator[](int i) const { return components_[i]; }
  const std::vector<Expr>& components() const { return components_; }
  const std::string& label() const { return label_; }
  VectorField relabeled(std::string label) const;

  bool is_zero() const;

  Vec eval(const Vec& x) const;
  // Entry (i, j) is d_j of component i.
  Mat jacobian_at(const Vec& x) const;
  // Row-major n*n symbolic Jacobian.
  std::vector<Expr> jacobian() const;

  VectorField operator+(const VectorField& other) const;
  VectorField operator*(double s) const;

  // Structural equality of the canonical components; labels are ignored.
  friend bool operator==(const VectorField& a, const VectorField& b) { return a.components_ == b.components_; }

 private:
  std::vector<Expr> components_;
  std::string label_;
};

// Several fields compiled into one evaluation tape.
class CompiledFields {
 public:
  CompiledFields() = default;
  explicit CompiledFields(std::span<const VectorField> fields);

  int dimension() const { return n_; }
  std::size_t count() const { return count_; }
  // out receives count() * dimension() values, field-major.
  void eval(const double* x, double* out, std::vector<double>& scratch) const;

 private:
  int n_ = 0;
  std::size_t count_ = 0;
  Tape tape_;
};

// [U,V] = DV U - DU V, labelled "[U,V]".
VectorField lie_bracket(const VectorField& u, const VectorField& v);

// A_U f = <U, grad f>.
Expr apply_operator(const VectorField& u, const Expr& f);

std::string format_field(const VectorField& f, const std::vector<std::string>& names);

struct BracketFamily {
  int dimension = 0;
  int noise_count = 0;
  // generations[k] lists every field of V_k (cumulative), deduplicated.
  std::vector<std::vector<VectorField>> generations;
  // Labels of brackets that canonicalized to the zero field, per generation.
  std::vector<std::vector<std::string>> vanishing;

  int levels() const { return static_cast<int>(generations.size()) - 1; }
};

inline constexpr std::size_t kDefaultGenerationCap = 512;

// fields[0] is the drift V_0, fields[1..m] the diffusion fields.
BracketFamily build_bracket_family(std::span<const VectorField> fields, int max_level,
                                   std::size_t generation_cap = kDefaultGenerationCap);

// Numerical rank of [V(x) : V in V_level]: singular values above tol * max(1, sigma_max).
int spanned_dimension(const BracketFamily& family, int level, const Vec& x, double tol = 1e-9);

struct HormanderResult {
  // Smallest level reaching full rank, or nullopt when undetermined up to max_level.
  std::optional<int> level;
  std::vector<int> dimensions;  // spanned dimension at each level checked
  BracketFamily family;
};

HormanderResult check_parabolic_hormander(std::span<const VectorField> fields, const Vec& x, int max_level,
                                          double tol = 1e-9, std::size_t generation_cap = kDefaultGenerationCap);

}  // namespace malliavin
