// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Stratonovich SDEs dx = V0 dt + sum_i V_i(x) o dW_i on a time grid, with the
// Jacobian J_{0,t} and its inverse advanced alongside the state.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "malliavin/expr.hpp"
#include "malliavin/vfield.hpp"

namespace malliavin {

enum class Scheme { StratonovichHeun, ItoEuler };

const char* scheme_name(Scheme s);
Scheme parse_scheme(const std::string& name);

// Per-thread buffers for the compiled field kernels.
struct KernelScratch {
  std::vector<double> tape;
  std::vector<double> fields;     // (m+1) * n : V0, V1, ..., Vm
  std::vector<double> jacobians;  // (m+1) * n * n, row-major per field
  std::vector<double> ito;        // n + n * n : corrected drift and its Jacobian
};

class SdeSystem {
 public:
  SdeSystem(VectorField drift, std::vector<VectorField> diffusion, std::vector<std::string> names = {});

  int dimension() const { return n_; }
  int noise_count() const { return m_; }
  const VectorField& drift() const { return fields_[0]; }
  // j = 0 is the drift, 1..m the diffusion fields.
  const VectorField& field(int j) const { return fields_.at(static_cast<std::size_t>(j)); }
  const std::vector<VectorField>& fields() const { return fields_; }
  // V0 + 1/2 sum_i DV_i V_i.
  const VectorField& ito_drift() const { return ito_drift_; }
  const std::vector<std::string>& names() const { return names_; }

  void eval_fields(const double* x, KernelScratch& s) const;
  void eval_jacobians(const double* x, KernelScratch& s) const;
  void eval_ito(const double* x, KernelScratch& s) const;

 private:
  int n_;
  int m_;
  std::vector<VectorField> fields_;
  VectorField ito_drift_;
  std::vector<std::string> names_;
  Tape field_tape_;
  Tape jacobian_tape_;
  Tape ito_tape_;
};

struct GridSpec {
  double horizon = 1.0;
  std::size_t steps = 1;
  int noise_count = 1;
  // Optional explicit steps; when non-empty they override horizon/steps.
  std::vector<double> explicit_dt;

  // Uniform horizon/steps with the last step absorbing rounding so the sum is
  // exactly the horizon.
  std::vector<double> step_sizes() const;
};

struct IncrementGrid {
  std::vector<double> dt;
  std::vector<double> dw;  // steps * m, step-major
  int m = 1;

  std::size_t steps() const { return dt.size(); }
  double horizon() const;
  double& w(std::size_t k, int i) { return dw[k * static_cast<std::size_t>(m) + static_cast<std::size_t>(i)]; }
  double w(std::size_t k, int i) const { return dw[k * static_cast<std::size_t>(m) + static_cast<std::size_t>(i)]; }
  // t_0 = 0, ..., t_N.
  std::vector<double> times() const;
};

IncrementGrid zero_increments(const GridSpec& spec);

// dw_{k,i} = sqrt(dt_k) * Z(seed, path, k, i).
IncrementGrid sample_increments(const GridSpec& spec, std::uint64_t seed, std::uint64_t path);
void sample_increments_into(IncrementGrid& grid, std::uint64_t seed, std::uint64_t path);

struct IntegrateOptions {
  Scheme scheme = Scheme::StratonovichHeun;
  bool track_jacobian = true;
  // When false only the initial and terminal entries are kept.
  bool store_path = true;
  // Start at grid step first_step with J = I there (for composition checks).
  std::size_t first_step = 0;
};

class FlowPath {
 public:
  int dimension() const { return n_; }
  // Number of steps integrated (grid steps minus first_step).
  std::size_t steps() const { return steps_; }
  bool has_jacobian() const { return has_jacobian_; }
  bool stores_path() const { return stored_ == steps_ + 1; }

  // k is local: 0 is the start, steps() the end.
  Eigen::Map<const Vec> state(std::size_t k) const;
  Eigen::Map<const Mat> jacobian(std::size_t k) const;
  Eigen::Map<const Mat> inverse_jacobian(std::size_t k) const;
  Eigen::Map<const Vec> terminal() const { return state(steps_); }

  // max_k ||J_k Jinv_k - I||_F over the integrated steps.
  double max_inverse_defect() const { return max_defect_; }
  // max over k and components of |x_k|.
  double sup_abs() const { return sup_abs_; }

 private:
  friend class FlowBuilder;
  std::size_t slot(std::size_t k) const;

  int n_ = 0;
  std::size_t steps_ = 0;
  std::size_t stored_ = 0;
  bool has_jacobian_ = false;
  std::vector<double> states_;
  std::vector<double> jac_;      // column-major n*n per entry
  std::vector<double> jac_inv_;  // column-major n*n per entry
  double max_defect_ = 0.0;
  double sup_abs_ = 0.0;
};

// Throws ExplosionError with the step index on a non-finite state.
FlowPath integrate(const SdeSystem& system, const Vec& x0, const IncrementGrid& grid,
                   const IntegrateOptions& options = {});
void integrate_into(FlowPath& out, const SdeSystem& system, const Vec& x0, const IncrementGrid& grid,
                    const IntegrateOptions& options, KernelScratch& scratch);

// Terminal state only; no allocation beyond the scratch.
Vec integrate_terminal(const SdeSystem& system, const Vec& x0, const IncrementGrid& grid, Scheme scheme,
                       KernelScratch& scratch);

// J_{0,t_N} J_{0,t_s}^{-1} V_j(x_{t_s}); zero for s = N. j in 1..m.
Vec malliavin_derivative_path(const FlowPath& flow, const SdeSystem& system, std::size_t s, int j);

// Central difference of the terminal state in increment (s, j), j in 1..m.
Vec bump_derivative(const SdeSystem& system, const Vec& x0, const IncrementGrid& grid, std::size_t s, int j,
                    double bump, Scheme scheme = Scheme::StratonovichHeun);

// Fast-oscillation control experiments, deterministic RK4.
inline constexpr double kOscillationResolution = 50.0;

struct ControlPath {
  Vec endpoint;
  std::vector<double> times;
  std::vector<Vec> states;
};

// x' = U(x) u_n'(t) + V(x) v_n'(t), u_n = cos(n^2 t)/n, v_n = sin(n^2 t)/n.
ControlPath oscillatory_control(const VectorField& u, const VectorField& v, const Vec& x0, int n_freq, double horizon,
                                std::size_t steps_per_unit);

// x' = U(x) + V(x) v_n'(t).
ControlPath drift_perturbation_control(const VectorField& u, const VectorField& v, const Vec& x0, int n_freq,
                                       double horizon, std::size_t steps_per_unit);

// RK4 flow of an autonomous field.
ControlPath autonomous_flow(const VectorField& f, const Vec& x0, double horizon, std::size_t steps);

// Flow of x' = U + (1/2n)[U,V], the effective equation proposed for the drift variant.
ControlPath effective_drift_flow(const VectorField& u, const VectorField& v, const Vec& x0, int n_freq, double horizon,
                                 std::size_t steps);

}  // namespace malliavin
