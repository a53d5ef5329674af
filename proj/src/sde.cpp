// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
#include "malliavin/sde.hpp"

#include <cmath>

#include "malliavin/errors.hpp"
#include "malliavin/rng.hpp"

namespace malliavin {

const char* scheme_name(Scheme s) {
  return s == Scheme::StratonovichHeun ? "stratonovich-heun" : "ito-euler";
}

Scheme parse_scheme(const std::string& name) {
  if (name == "stratonovich-heun" || name == "heun") return Scheme::StratonovichHeun;
  if (name == "ito-euler-on-corrected-drift" || name == "ito-euler" || name == "euler") return Scheme::ItoEuler;
  throw InputError("unknown scheme '" + name + "'");
}

namespace {

VectorField corrected_drift(const VectorField& v0, const std::vector<VectorField>& diffusion) {
  const int n = v0.dimension();
  std::vector<Expr> comps;
  for (int i = 0; i < n; ++i) {
    std::vector<Expr> terms{v0[i]};
    for (const auto& v : diffusion) {
      for (int j = 0; j < n; ++j) terms.push_back(0.5 * derivative(v[i], j) * v[j]);
    }
    comps.push_back(sum(std::move(terms)));
  }
  return VectorField(std::move(comps), "V0~");
}

}  // namespace

SdeSystem::SdeSystem(VectorField drift, std::vector<VectorField> diffusion, std::vector<std::string> names)
    : n_(drift.dimension()), m_(static_cast<int>(diffusion.size())), names_(std::move(names)) {
  if (m_ < 1) throw InputError("an SDE needs at least one diffusion field");
  for (const auto& v : diffusion) {
    if (v.dimension() != n_) throw InputError("diffusion field dimension differs from drift dimension");
  }
  if (names_.empty()) {
    for (int i = 0; i < n_; ++i) names_.push_back("x" + std::to_string(i + 1));
  }
  if (static_cast<int>(names_.size()) != n_) throw InputError("variable name count differs from dimension");
  ito_drift_ = corrected_drift(drift, diffusion);
  fields_.push_back(drift.label().empty() ? drift.relabeled("V0") : std::move(drift));
  for (std::size_t i = 0; i < diffusion.size(); ++i) {
    auto& v = diffusion[i];
    fields_.push_back(v.label().empty() ? v.relabeled("V" + std::to_string(i + 1)) : std::move(v));
  }

  std::vector<Expr> values, jacs, ito;
  for (const auto& f : fields_) {
    values.insert(values.end(), f.components().begin(), f.components().end());
    auto d = f.jacobian();
    jacs.insert(jacs.end(), d.begin(), d.end());
  }
  ito.insert(ito.end(), ito_drift_.components().begin(), ito_drift_.components().end());
  auto dito = ito_drift_.jacobian();
  ito.insert(ito.end(), dito.begin(), dito.end());
  field_tape_ = Tape(values);
  jacobian_tape_ = Tape(jacs);
  ito_tape_ = Tape(ito);
}

void SdeSystem::eval_fields(const double* x, KernelScratch& s) const {
  s.fields.resize(field_tape_.output_count());
  field_tape_.evaluate(std::span<const double>(x, static_cast<std::size_t>(n_)), s.fields, s.tape);
}

void SdeSystem::eval_jacobians(const double* x, KernelScratch& s) const {
  s.jacobians.resize(jacobian_tape_.output_count());
  jacobian_tape_.evaluate(std::span<const double>(x, static_cast<std::size_t>(n_)), s.jacobians, s.tape);
}

void SdeSystem::eval_ito(const double* x, KernelScratch& s) const {
  s.ito.resize(ito_tape_.output_count());
  ito_tape_.evaluate(std::span<const double>(x, static_cast<std::size_t>(n_)), s.ito, s.tape);
}

std::vector<double> GridSpec::step_sizes() const {
  if (!explicit_dt.empty()) {
    for (double d : explicit_dt) {
      if (!(d > 0.0) || !std::isfinite(d)) throw InputError("grid steps must be positive and finite");
    }
    return explicit_dt;
  }
  if (steps < 1) throw InputError("grid needs N >= 1");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InputError("grid horizon must be positive");
  std::vector<double> dt(steps, horizon / static_cast<double>(steps));
  double head = 0.0;
  for (std::size_t k = 0; k + 1 < steps; ++k) head += dt[k];
  dt.back() = horizon - head;
  return dt;
}

double IncrementGrid::horizon() const {
  double t = 0.0;
  for (double d : dt) t += d;
  return t;
}

std::vector<double> IncrementGrid::times() const {
  std::vector<double> t(dt.size() + 1, 0.0);
  for (std::size_t k = 0; k < dt.size(); ++k) t[k + 1] = t[k] + dt[k];
  return t;
}

IncrementGrid zero_increments(const GridSpec& spec) {
  if (spec.noise_count < 1) throw InputError("grid needs m >= 1");
  IncrementGrid g;
  g.dt = spec.step_sizes();
  g.m = spec.noise_count;
  g.dw.assign(g.dt.size() * static_cast<std::size_t>(g.m), 0.0);
  return g;
}

void sample_increments_into(IncrementGrid& g, std::uint64_t seed, std::uint64_t path) {
  const auto m = static_cast<std::uint32_t>(g.m);
  for (std::size_t k = 0; k < g.dt.size(); ++k) {
    const double sd = std::sqrt(g.dt[k]);
    for (std::uint32_t c = 0; c < m; c += 2) {
      auto z = normal_pair(seed, path, k, c / 2);
      g.dw[k * m + c] = sd * z[0];
      if (c + 1 < m) g.dw[k * m + c + 1] = sd * z[1];
    }
  }
}

IncrementGrid sample_increments(const GridSpec& spec, std::uint64_t seed, std::uint64_t path) {
  IncrementGrid g = zero_increments(spec);
  sample_increments_into(g, seed, path);
  return g;
}

std::size_t FlowPath::slot(std::size_t k) const {
  if (k > steps_) throw InputError("flow index out of range");
  if (stores_path()) return k;
  if (k == 0) return 0;
  if (k == steps_) return 1;
  throw InputError("flow was integrated without storing the path");
}

Eigen::Map<const Vec> FlowPath::state(std::size_t k) const {
  return Eigen::Map<const Vec>(states_.data() + slot(k) * static_cast<std::size_t>(n_), n_);
}

Eigen::Map<const Mat> FlowPath::jacobian(std::size_t k) const {
  if (!has_jacobian_) throw InputError("flow was integrated without the Jacobian");
  return Eigen::Map<const Mat>(jac_.data() + slot(k) * static_cast<std::size_t>(n_ * n_), n_, n_);
}

Eigen::Map<const Mat> FlowPath::inverse_jacobian(std::size_t k) const {
  if (!has_jacobian_) throw InputError("flow was integrated without the Jacobian");
  return Eigen::Map<const Mat>(jac_inv_.data() + slot(k) * static_cast<std::size_t>(n_ * n_), n_, n_);
}

class FlowBuilder {
 public:
  static void run(FlowPath& out, const SdeSystem& sys, const Vec& x0, const IncrementGrid& grid,
                  const IntegrateOptions& opt, KernelScratch& ks);
};

namespace {

bool all_finite(const double* p, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::isfinite(p[i])) return false;
  }
  return true;
}

// a = V0 dt + sum_i V_i dw_i from evaluated fields.
void increment(const double* fields, int n, int m, double dt, const double* dw, double* a) {
  for (int r = 0; r < n; ++r) a[r] = fields[r] * dt;
  for (int i = 0; i < m; ++i) {
    const double* v = fields + static_cast<std::size_t>(i + 1) * n;
    for (int r = 0; r < n; ++r) a[r] += v[r] * dw[i];
  }
}

// A = DV0 dt + sum_i DV_i dw_i, column-major output from row-major kernels.
void increment_jacobian(const double* jac, int n, int m, double dt, const double* dw, Mat& a) {
  const std::size_t nn = static_cast<std::size_t>(n) * n;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      double s = jac[r * n + c] * dt;
      for (int i = 0; i < m; ++i) s += jac[(i + 1) * nn + r * n + c] * dw[i];
      a(r, c) = s;
    }
  }
}

}  // namespace

void FlowBuilder::run(FlowPath& out, const SdeSystem& sys, const Vec& x0, const IncrementGrid& grid,
                      const IntegrateOptions& opt, KernelScratch& ks) {
  const int n = sys.dimension();
  const int m = sys.noise_count();
  if (x0.size() != n) throw InputError("initial state dimension does not match the system");
  if (grid.m != m) throw InputError("increment grid noise count does not match the system");
  if (opt.first_step > grid.steps()) throw InputError("first_step beyond the grid");
  const std::size_t steps = grid.steps() - opt.first_step;
  const std::size_t nn = static_cast<std::size_t>(n) * n;

  out.n_ = n;
  out.steps_ = steps;
  out.stored_ = opt.store_path ? steps + 1 : 2;
  out.has_jacobian_ = opt.track_jacobian;
  out.states_.assign(out.stored_ * n, 0.0);
  out.max_defect_ = 0.0;
  out.sup_abs_ = x0.cwiseAbs().maxCoeff();
  if (opt.track_jacobian) {
    out.jac_.assign(out.stored_ * nn, 0.0);
    out.jac_inv_.assign(out.stored_ * nn, 0.0);
  } else {
    out.jac_.clear();
    out.jac_inv_.clear();
  }

  Vec x = x0, xbar(n), a(n), abar(n);
  Mat J = Mat::Identity(n, n), Ji = Mat::Identity(n, n);
  Mat A(n, n), Abar(n, n), AJ(n, n), JiA(n, n), tmp(n, n);
  const Mat I = Mat::Identity(n, n);

  auto store = [&](std::size_t slot) {
    std::copy(x.data(), x.data() + n, out.states_.data() + slot * n);
    if (opt.track_jacobian) {
      std::copy(J.data(), J.data() + nn, out.jac_.data() + slot * nn);
      std::copy(Ji.data(), Ji.data() + nn, out.jac_inv_.data() + slot * nn);
    }
  };
  store(0);

  for (std::size_t local = 0; local < steps; ++local) {
    const std::size_t k = opt.first_step + local;
    const double dt = grid.dt[k];
    const double* dw = grid.dw.data() + k * static_cast<std::size_t>(m);

    if (opt.scheme == Scheme::StratonovichHeun) {
      sys.eval_fields(x.data(), ks);
      increment(ks.fields.data(), n, m, dt, dw, a.data());
      if (opt.track_jacobian) {
        sys.eval_jacobians(x.data(), ks);
        increment_jacobian(ks.jacobians.data(), n, m, dt, dw, A);
      }
      xbar = x + a;
      sys.eval_fields(xbar.data(), ks);
      increment(ks.fields.data(), n, m, dt, dw, abar.data());
      if (opt.track_jacobian) {
        sys.eval_jacobians(xbar.data(), ks);
        increment_jacobian(ks.jacobians.data(), n, m, dt, dw, Abar);
        // Predictor-corrector on (J, Jinv) with the same field evaluations as x.
        AJ.noalias() = A * J;
        tmp = J + AJ;
        J += 0.5 * AJ;
        J.noalias() += 0.5 * (Abar * tmp);
        JiA.noalias() = Ji * A;
        tmp = Ji - JiA;
        Ji -= 0.5 * JiA;
        Ji.noalias() -= 0.5 * (tmp * Abar);
      }
      x += 0.5 * (a + abar);
    } else {
      sys.eval_ito(x.data(), ks);
      sys.eval_fields(x.data(), ks);
      const double* vt = ks.ito.data();
      for (int r = 0; r < n; ++r) a[r] = vt[r] * dt;
      for (int i = 0; i < m; ++i) {
        const double* v = ks.fields.data() + static_cast<std::size_t>(i + 1) * n;
        for (int r = 0; r < n; ++r) a[r] += v[r] * dw[i];
      }
      if (opt.track_jacobian) {
        sys.eval_jacobians(x.data(), ks);
        const double* dvt = ks.ito.data() + n;
        // A = D~V0 dt + sum DV_i dw_i ; B = A - sum DV_i DV_i dt
        for (int r = 0; r < n; ++r) {
          for (int c = 0; c < n; ++c) {
            double s = dvt[r * n + c] * dt;
            for (int i = 0; i < m; ++i) s += ks.jacobians[(i + 1) * nn + r * n + c] * dw[i];
            A(r, c) = s;
          }
        }
        Abar = A;
        for (int i = 0; i < m; ++i) {
          Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> dv(
              ks.jacobians.data() + (i + 1) * nn, n, n);
          Abar.noalias() -= (dv * dv) * dt;
        }
        J = (I + A) * J;
        Ji = Ji * (I - Abar);
      }
      x += a;
    }

    if (!all_finite(x.data(), static_cast<std::size_t>(n)) ||
        (opt.track_jacobian && (!all_finite(J.data(), nn) || !all_finite(Ji.data(), nn)))) {
      throw ExplosionError(k);
    }
    out.sup_abs_ = std::max(out.sup_abs_, x.cwiseAbs().maxCoeff());
    if (opt.track_jacobian) out.max_defect_ = std::max(out.max_defect_, (J * Ji - I).norm());
    if (opt.store_path) {
      store(local + 1);
    } else if (local + 1 == steps) {
      store(1);
    }
  }
  if (steps == 0 && !opt.store_path) store(1);
}

void integrate_into(FlowPath& out, const SdeSystem& system, const Vec& x0, const IncrementGrid& grid,
                    const IntegrateOptions& options, KernelScratch& scratch) {
  FlowBuilder::run(out, system, x0, grid, options, scratch);
}

FlowPath integrate(const SdeSystem& system, const Vec& x0, const IncrementGrid& grid, const IntegrateOptions& options) {
  FlowPath out;
  KernelScratch ks;
  FlowBuilder::run(out, system, x0, grid, options, ks);
  return out;
}

Vec integrate_terminal(const SdeSystem& sys, const Vec& x0, const IncrementGrid& grid, Scheme scheme,
                       KernelScratch& ks) {
  const int n = sys.dimension();
  const int m = sys.noise_count();
  if (x0.size() != n) throw InputError("initial state dimension does not match the system");
  if (grid.m != m) throw InputError("increment grid noise count does not match the system");
  Vec x = x0, xbar(n), a(n), abar(n);
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    const double dt = grid.dt[k];
    const double* dw = grid.dw.data() + k * static_cast<std::size_t>(m);
    if (scheme == Scheme::StratonovichHeun) {
      sys.eval_fields(x.data(), ks);
      increment(ks.fields.data(), n, m, dt, dw, a.data());
      xbar = x + a;
      sys.eval_fields(xbar.data(), ks);
      increment(ks.fields.data(), n, m, dt, dw, abar.data());
      x += 0.5 * (a + abar);
    } else {
      sys.eval_ito(x.data(), ks);
      sys.eval_fields(x.data(), ks);
      for (int r = 0; r < n; ++r) a[r] = ks.ito[r] * dt;
      for (int i = 0; i < m; ++i) {
        for (int r = 0; r < n; ++r) a[r] += ks.fields[static_cast<std::size_t>(i + 1) * n + r] * dw[i];
      }
      x += a;
    }
    if (!all_finite(x.data(), static_cast<std::size_t>(n))) throw ExplosionError(k);
  }
  return x;
}

Vec malliavin_derivative_path(const FlowPath& flow, const SdeSystem& system, std::size_t s, int j) {
  if (j < 1 || j > system.noise_count()) throw InputError("noise index out of range");
  if (s > flow.steps()) throw InputError("time index out of range");
  const int n = system.dimension();
  if (s == flow.steps()) return Vec::Zero(n);
  Vec v = system.field(j).eval(flow.state(s));
  return flow.jacobian(flow.steps()) * (flow.inverse_jacobian(s) * v);
}

Vec bump_derivative(const SdeSystem& system, const Vec& x0, const IncrementGrid& grid, std::size_t s, int j,
                    double bump, Scheme scheme) {
  if (!(bump > 0.0)) throw InputError("bump must be positive");
  if (j < 1 || j > system.noise_count()) throw InputError("noise index out of range");
  if (s >= grid.steps()) throw InputError("increment index out of range");
  KernelScratch ks;
  IncrementGrid g = grid;
  g.w(s, j - 1) = grid.w(s, j - 1) + bump;
  Vec up = integrate_terminal(system, x0, g, scheme, ks);
  g.w(s, j - 1) = grid.w(s, j - 1) - bump;
  Vec down = integrate_terminal(system, x0, g, scheme, ks);
  return (up - down) / (2.0 * bump);
}

namespace {

template <class Rhs>
ControlPath rk4(const Rhs& rhs, const Vec& x0, double horizon, std::size_t steps) {
  ControlPath out;
  out.times.reserve(steps + 1);
  out.states.reserve(steps + 1);
  const double h = horizon / static_cast<double>(steps);
  Vec x = x0;
  out.times.push_back(0.0);
  out.states.push_back(x);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * h;
    Vec k1 = rhs(t, x);
    Vec k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1);
    Vec k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2);
    Vec k4 = rhs(t + h, x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite()) throw ExplosionError(k);
    out.times.push_back(static_cast<double>(k + 1) * h);
    out.states.push_back(x);
  }
  out.endpoint = x;
  return out;
}

std::size_t resolved_steps(int n_freq, double horizon, std::size_t steps_per_unit) {
  if (n_freq < 1) throw InputError("n_freq must be at least 1");
  if (!(horizon > 0.0)) throw InputError("horizon must be positive");
  const double need = kOscillationResolution * n_freq * n_freq;
  if (static_cast<double>(steps_per_unit) < need) {
    throw InputError("substeps " + std::to_string(steps_per_unit) + " per unit time do not resolve n_freq " +
                     std::to_string(n_freq) + " (need " + std::to_string(static_cast<long long>(need)) + ")");
  }
  return static_cast<std::size_t>(std::ceil(horizon * static_cast<double>(steps_per_unit)));
}

}  // namespace

ControlPath oscillatory_control(const VectorField& u, const VectorField& v, const Vec& x0, int n_freq, double horizon,
                                std::size_t steps_per_unit) {
  if (u.dimension() != v.dimension() || x0.size() != u.dimension()) throw InputError("dimension mismatch");
  const std::size_t steps = resolved_steps(n_freq, horizon, steps_per_unit);
  std::vector<VectorField> uv{u, v};
  CompiledFields kernel(uv);
  const int n = u.dimension();
  const double w = static_cast<double>(n_freq) * n_freq;
  std::vector<double> buf(2 * static_cast<std::size_t>(n)), scratch;
  auto rhs = [&](double t, const Vec& x) {
    kernel.eval(x.data(), buf.data(), scratch);
    const double du = -n_freq * std::sin(w * t);
    const double dv = n_freq * std::cos(w * t);
    Vec out(n);
    for (int i = 0; i < n; ++i) out[i] = buf[i] * du + buf[n + i] * dv;
    return out;
  };
  return rk4(rhs, x0, horizon, steps);
}

ControlPath drift_perturbation_control(const VectorField& u, const VectorField& v, const Vec& x0, int n_freq,
                                       double horizon, std::size_t steps_per_unit) {
  if (u.dimension() != v.dimension() || x0.size() != u.dimension()) throw InputError("dimension mismatch");
  const std::size_t steps = resolved_steps(n_freq, horizon, steps_per_unit);
  std::vector<VectorField> uv{u, v};
  CompiledFields kernel(uv);
  const int n = u.dimension();
  const double w = static_cast<double>(n_freq) * n_freq;
  std::vector<double> buf(2 * static_cast<std::size_t>(n)), scratch;
  auto rhs = [&](double t, const Vec& x) {
    kernel.eval(x.data(), buf.data(), scratch);
    const double dv = n_freq * std::cos(w * t);
    Vec out(n);
    for (int i = 0; i < n; ++i) out[i] = buf[i] + buf[n + i] * dv;
    return out;
  };
  return rk4(rhs, x0, horizon, steps);
}

ControlPath autonomous_flow(const VectorField& f, const Vec& x0, double horizon, std::size_t steps) {
  if (x0.size() != f.dimension()) throw InputError("dimension mismatch");
  if (steps < 1) throw InputError("need at least one step");
  std::vector<VectorField> one{f};
  CompiledFields kernel(one);
  std::vector<double> scratch;
  auto rhs = [&](double, const Vec& x) {
    Vec out(f.dimension());
    kernel.eval(x.data(), out.data(), scratch);
    return out;
  };
  return rk4(rhs, x0, horizon, steps);
}

ControlPath effective_drift_flow(const VectorField& u, const VectorField& v, const Vec& x0, int n_freq, double horizon,
                                 std::size_t steps) {
  if (n_freq < 1) throw InputError("n_freq must be at least 1");
  VectorField eff = u + lie_bracket(u, v) * (1.0 / (2.0 * n_freq));
  return autonomous_flow(eff, x0, horizon, steps);
}

}  // namespace malliavin
