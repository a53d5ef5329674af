// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Malliavin covariance matrices along simulated flows.
//
//   C = sum_k J_k^{-1} V(x_k) V(x_k)^T J_k^{-T} dt_k   (left-endpoint rule)
//   M = J_N C J_N^T
//
// plus small-eigenvalue tail statistics, inverse moments, a first-order
// integration-by-parts density probe and a Gaussian KDE.
#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "malliavin/ensemble.hpp"
#include "malliavin/sde.hpp"

namespace malliavin {

inline constexpr double kEigenFloor = 1e-14;
inline constexpr double kPsdTolerance = -1e-10;

// Counter stream offset for random eta directions; stream r draws direction r of a path.
inline constexpr std::uint64_t kEtaStream = std::uint64_t{1} << 40;

// Unit vector from n standard normals on stream kEtaStream + r.
Vec random_direction(std::uint64_t seed, std::uint64_t path, int r, int n);

struct CovarianceSample {
  Mat c;
  Mat m;
  double lambda_min_c = 0.0;
  double lambda_min_m = 0.0;
  double asymmetry = 0.0;  // max |C - C^T| before symmetrization
  std::uint64_t seed = 0;
  std::size_t path = 0;
};

// The flow must carry Jacobians and the full path; the grid must span [0, 1].
CovarianceSample reduced_matrix(const FlowPath& flow, const SdeSystem& system, const std::vector<double>& dt);

// Z_F(t_k) = <eta, J_k^{-1} F(x_k)>, k = 0..N.
std::vector<double> z_process(const FlowPath& flow, const Vec& eta, const VectorField& f);

struct QuadraticForm {
  double matrix_route = 0.0;  // <eta, C eta>
  double z_route = 0.0;       // sum_i sum_k Z_{V_i}(t_k)^2 dt_k
  double relative_gap = 0.0;
};

QuadraticForm quadratic_form_decomposition(const FlowPath& flow, const SdeSystem& system, const std::vector<double>& dt,
                                           const Vec& eta);

// Reduced matrices for an ensemble of paths; exploding paths are excluded.
EnsembleResult<CovarianceSample> covariance_ensemble(const SdeSystem& system, const Vec& x0, const GridSpec& grid,
                                                     std::size_t paths, std::uint64_t seed,
                                                     const EnsembleOptions& opt = {},
                                                     Scheme scheme = Scheme::StratonovichHeun);

// The sup over unit eta is approximated by fixed directions plus `random`
// fresh random directions per path.
struct EtaPolicy {
  std::vector<Vec> fixed;
  int random = 16;

  static EtaPolicy axes_and_random(int n, int random = 16);
  std::string describe() const;
};

struct ScalingBin {
  double epsilon = 0.0;
  std::size_t hits = 0;
  std::size_t paths = 0;
  double p_lo = 0.0;
  double p_hat = 0.0;
  double p_hi = 0.0;
};

enum class TailStatus { Fitted, Censored, NoTailMass, Floor };
const char* tail_status_name(TailStatus s);

struct ScalingReport {
  std::vector<ScalingBin> bins;
  double fit_lo = 0.0;
  double fit_hi = 0.0;
  TailStatus status = TailStatus::Censored;
  double slope = std::numeric_limits<double>::quiet_NaN();  // +inf for NoTailMass
  double intercept = std::numeric_limits<double>::quiet_NaN();
  std::size_t fit_bins = 0;
  std::string policy;
  std::size_t excluded = 0;
  double min_quadratic_form = 0.0;  // smallest policy value over paths
  double min_lambda = 0.0;          // smallest lambda_min(C) over paths
  double max_lambda = 0.0;          // largest lambda_min(C) over paths
};

struct TailOptions {
  std::vector<double> epsilons;  // ascending or not; sorted internally
  double fit_lo = 0.0;
  double fit_hi = std::numeric_limits<double>::infinity();
  std::size_t min_hits = 10;
  // Confidence level of the Clopper-Pearson interval.
  double confidence = 0.95;
  // A fit slope below this, with the smallest bin bounded away from zero, is a floor.
  double floor_slope = 0.25;
  std::size_t paths = 1000;
  GridSpec grid;
  std::uint64_t seed = 0;
  EtaPolicy policy;
  EnsembleOptions exec;
};

// 2^hi, 2^(hi-1), ..., 2^lo.
std::vector<double> dyadic_epsilons(int lo_exponent, int hi_exponent);

ScalingReport tail_scaling(const SdeSystem& system, const Vec& x0, const TailOptions& opt);

// Fold of precomputed per-path policy values; the assembly step of tail_scaling.
ScalingReport scaling_report(const std::vector<double>& values, std::size_t excluded, const TailOptions& opt);

struct DecadeShare {
  int exponent = 0;  // lambda in [10^e, 10^(e+1))
  std::size_t count = 0;
  double share = 0.0;  // fraction of the sum of lambda^-p
};

struct InverseMomentReport {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t used = 0;
  std::size_t excluded = 0;  // lambda below the floor
  std::vector<DecadeShare> decades;
};

// E[lambda_min(C)^-p]; samples with lambda_min <= 1e-14 are excluded.
InverseMomentReport inverse_moment_estimate(const std::vector<double>& lambda_min, double p);
InverseMomentReport inverse_moment_estimate(const std::vector<CovarianceSample>& samples, double p);

struct ProbeOptions {
  int direction = 0;  // j, 0-based
  GridSpec grid;
  std::size_t paths = 1000;
  std::uint64_t seed = 0;
  double bump = 1e-4;
  double max_condition = 1e10;
  double max_exclusion = 0.01;
  EnsembleOptions exec;
};

struct ProbeResult {
  double lhs = 0.0;  // E[d_j G(X_N)]
  double rhs = 0.0;  // E[G(X_N) skorokhod(u)]
  double lhs_stderr = 0.0;
  double rhs_stderr = 0.0;
  double difference = 0.0;
  double difference_stderr = 0.0;  // paired
  double z = 0.0;
  std::size_t used = 0;
  std::size_t excluded = 0;
};

// Per-path estimator pieces, exposed for tests.
struct ProbeSample {
  Vec terminal;
  Mat malliavin;             // discrete M of the Heun map
  std::vector<double> u;     // u_{k,i}, step-major
  std::vector<double> du;    // d_{k,i} u_{k,i} by central bumps
  double skorokhod = 0.0;
  double condition = 0.0;
};

// Exact derivatives of the Heun map, Stratonovich scheme only; n, m <= 4.
ProbeSample probe_sample(const SdeSystem& system, const Vec& x0, const IncrementGrid& incs, int direction, double bump);

ProbeResult ibp_density_probe(const SdeSystem& system, const Vec& x0, const Expr& observable, const ProbeOptions& opt);

// Gaussian-kernel estimate at each point of `grid`.
std::vector<double> kde_density(const std::vector<double>& samples, double bandwidth, const std::vector<double>& grid,
                                const EnsembleOptions& opt = {});

// Mass of the kernel estimate outside [lo, hi], in closed form.
double kde_mass_outside(const std::vector<double>& samples, double bandwidth, double lo, double hi);

}  // namespace malliavin
