// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
#include "malliavin/mmatrix.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "malliavin/errors.hpp"
#include "malliavin/rng.hpp"
#include "malliavin/stats.hpp"

namespace malliavin {

namespace {

double symmetric_min_eigenvalue(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues()[0];
}

void require_unit_horizon(const std::vector<double>& dt) {
  const double t = std::accumulate(dt.begin(), dt.end(), 0.0);
  if (std::abs(t - 1.0) > 1e-12) {
    throw InputError(fmt::format("reduced matrix needs the horizon 1, got {}", t));
  }
}

}  // namespace

CovarianceSample reduced_matrix(const FlowPath& flow, const SdeSystem& system, const std::vector<double>& dt) {
  if (!flow.has_jacobian() || !flow.stores_path()) {
    throw InputError("reduced matrix needs a flow with Jacobians and the full path");
  }
  if (dt.size() != flow.steps()) throw InputError("step list does not match the flow");
  require_unit_horizon(dt);
  const int n = system.dimension();
  const int m = system.noise_count();
  KernelScratch ks;
  Mat c = Mat::Zero(n, n);
  Mat v(n, m);
  Mat b(n, m);
  for (std::size_t k = 0; k < flow.steps(); ++k) {
    system.eval_fields(flow.state(k).data(), ks);
    for (int i = 0; i < m; ++i) {
      for (int r = 0; r < n; ++r) v(r, i) = ks.fields[static_cast<std::size_t>(i + 1) * n + r];
    }
    b.noalias() = flow.inverse_jacobian(k) * v;
    c.noalias() += dt[k] * (b * b.transpose());
  }
  CovarianceSample out;
  out.asymmetry = (c - c.transpose()).cwiseAbs().maxCoeff();
  out.c = 0.5 * (c + c.transpose());
  const auto j = flow.jacobian(flow.steps());
  Mat mm = j * out.c * j.transpose();
  out.m = 0.5 * (mm + mm.transpose());
  out.lambda_min_c = symmetric_min_eigenvalue(out.c);
  out.lambda_min_m = symmetric_min_eigenvalue(out.m);
  return out;
}

std::vector<double> z_process(const FlowPath& flow, const Vec& eta, const VectorField& f) {
  if (!flow.has_jacobian() || !flow.stores_path()) {
    throw InputError("Z process needs a flow with Jacobians and the full path");
  }
  if (f.dimension() != flow.dimension() || eta.size() != flow.dimension()) {
    throw InputError("Z process dimension mismatch");
  }
  const VectorField fields[] = {f};
  CompiledFields cf(fields);
  std::vector<double> scratch;
  Vec v(flow.dimension());
  std::vector<double> out;
  out.reserve(flow.steps() + 1);
  for (std::size_t k = 0; k <= flow.steps(); ++k) {
    cf.eval(flow.state(k).data(), v.data(), scratch);
    out.push_back(eta.dot(flow.inverse_jacobian(k) * v));
  }
  return out;
}

QuadraticForm quadratic_form_decomposition(const FlowPath& flow, const SdeSystem& system, const std::vector<double>& dt,
                                           const Vec& eta) {
  if (std::abs(eta.norm() - 1.0) > 1e-12) throw InputError("eta must be a unit vector");
  QuadraticForm q;
  const auto s = reduced_matrix(flow, system, dt);
  q.matrix_route = eta.dot(s.c * eta);
  for (int i = 1; i <= system.noise_count(); ++i) {
    const auto z = z_process(flow, eta, system.field(i));
    for (std::size_t k = 0; k < flow.steps(); ++k) q.z_route += z[k] * z[k] * dt[k];
  }
  const double scale = std::max(std::abs(q.matrix_route), std::abs(q.z_route));
  q.relative_gap = scale > 0 ? std::abs(q.matrix_route - q.z_route) / scale : 0.0;
  return q;
}

namespace {

struct FlowWorkspace {
  IncrementGrid incs;
  FlowPath flow;
  KernelScratch ks;
};

FlowWorkspace flow_workspace(const GridSpec& grid, int m) {
  GridSpec g = grid;
  g.noise_count = m;
  FlowWorkspace ws;
  ws.incs = zero_increments(g);
  return ws;
}

}  // namespace

EnsembleResult<CovarianceSample> covariance_ensemble(const SdeSystem& system, const Vec& x0, const GridSpec& grid,
                                                     std::size_t paths, std::uint64_t seed,
                                                     const EnsembleOptions& opt, Scheme scheme) {
  require_unit_horizon(grid.step_sizes());
  IntegrateOptions io;
  io.scheme = scheme;
  return map_paths<CovarianceSample>(
      paths, flow_workspace(grid, system.noise_count()),
      [&](std::size_t p, FlowWorkspace& ws) {
        sample_increments_into(ws.incs, seed, p);
        integrate_into(ws.flow, system, x0, ws.incs, io, ws.ks);
        auto s = reduced_matrix(ws.flow, system, ws.incs.dt);
        s.seed = seed;
        s.path = p;
        return s;
      },
      opt);
}

// ---------------------------------------------------------------------------
// Tail scaling

EtaPolicy EtaPolicy::axes_and_random(int n, int random) {
  EtaPolicy p;
  for (int i = 0; i < n; ++i) p.fixed.push_back(Vec::Unit(n, i));
  p.random = random;
  return p;
}

std::string EtaPolicy::describe() const {
  std::string s = "min over";
  for (const auto& e : fixed) {
    s += " (";
    for (Eigen::Index i = 0; i < e.size(); ++i) s += (i ? "," : "") + fmt::format("{}", e[i]);
    s += ")";
  }
  return s + fmt::format(" and {} random unit directions per path", random);
}

const char* tail_status_name(TailStatus s) {
  switch (s) {
    case TailStatus::Fitted:
      return "fitted";
    case TailStatus::Censored:
      return "censored";
    case TailStatus::NoTailMass:
      return "no_tail_mass";
    case TailStatus::Floor:
      return "floor";
  }
  return "?";
}

std::vector<double> dyadic_epsilons(int lo_exponent, int hi_exponent) {
  if (lo_exponent > hi_exponent) throw InputError("epsilon grid exponents out of order");
  std::vector<double> e;
  for (int k = hi_exponent; k >= lo_exponent; --k) e.push_back(std::ldexp(1.0, k));
  return e;
}

ScalingReport scaling_report(const std::vector<double>& values, std::size_t excluded, const TailOptions& opt) {
  if (opt.epsilons.empty()) throw InputError("empty epsilon grid");
  if (!(opt.confidence > 0.0 && opt.confidence < 1.0)) throw InputError("confidence must lie in (0, 1)");
  ScalingReport rep;
  rep.fit_lo = opt.fit_lo;
  rep.fit_hi = opt.fit_hi;
  rep.policy = opt.policy.describe();
  rep.excluded = excluded;
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  rep.min_quadratic_form = sorted.empty() ? std::numeric_limits<double>::quiet_NaN() : sorted.front();

  std::vector<double> eps = opt.epsilons;
  std::sort(eps.begin(), eps.end());
  for (double e : eps) {
    if (!(e > 0.0)) throw InputError("epsilon values must be positive");
    ScalingBin b;
    b.epsilon = e;
    b.paths = sorted.size();
    b.hits = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), e) - sorted.begin());
    if (b.paths > 0) {
      b.p_hat = static_cast<double>(b.hits) / static_cast<double>(b.paths);
      std::tie(b.p_lo, b.p_hi) = clopper_pearson(b.hits, b.paths, opt.confidence);
    }
    rep.bins.push_back(b);
  }

  std::vector<const ScalingBin*> range;
  for (const auto& b : rep.bins) {
    if (b.epsilon >= opt.fit_lo * (1 - 1e-12) && b.epsilon <= opt.fit_hi * (1 + 1e-12)) range.push_back(&b);
  }
  if (range.empty()) throw InputError("no epsilon inside the fit range");
  const bool empty_tail = std::all_of(range.begin(), range.end(), [](const ScalingBin* b) { return b->hits == 0; });
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto* b : range) {
    if (b->hits >= opt.min_hits) {
      xs.push_back(std::log(b->epsilon));
      ys.push_back(std::log(b->p_hat));
    }
  }
  rep.fit_bins = xs.size();
  if (empty_tail && !sorted.empty()) {
    rep.status = TailStatus::NoTailMass;
    rep.slope = std::numeric_limits<double>::infinity();
  } else if (xs.size() >= 2) {
    const auto fit = ols(xs, ys);
    rep.slope = fit.slope;
    rep.intercept = fit.intercept;
    rep.status = rep.slope < opt.floor_slope && range.front()->p_lo > 0.0 ? TailStatus::Floor : TailStatus::Fitted;
  } else {
    rep.status = TailStatus::Censored;
  }
  return rep;
}

namespace {

// Random directions live on a stream far from the increment steps.

struct TailValue {
  double policy = 0.0;
  double lambda = 0.0;
};

}  // namespace

Vec random_direction(std::uint64_t seed, std::uint64_t path, int r, int n) {
  Vec eta(n);
  for (int i = 0; i < n; ++i) {
    eta[i] = standard_normal(seed, path, kEtaStream + static_cast<std::uint64_t>(r), static_cast<std::uint32_t>(i));
  }
  return eta.normalized();
}

ScalingReport tail_scaling(const SdeSystem& system, const Vec& x0, const TailOptions& opt) {
  const int n = system.dimension();
  if (opt.paths < 1000) throw InputError("tail scaling needs at least 1000 paths");
  if (opt.policy.fixed.empty() && opt.policy.random < 1) throw InputError("eta policy has no directions");
  for (const auto& e : opt.policy.fixed) {
    if (e.size() != n || !(e.norm() > 0)) throw InputError("fixed eta has the wrong dimension or is zero");
  }
  require_unit_horizon(opt.grid.step_sizes());
  IntegrateOptions io;
  auto res = map_paths<TailValue>(
      opt.paths, flow_workspace(opt.grid, system.noise_count()),
      [&](std::size_t p, FlowWorkspace& ws) {
        sample_increments_into(ws.incs, opt.seed, p);
        integrate_into(ws.flow, system, x0, ws.incs, io, ws.ks);
        const auto s = reduced_matrix(ws.flow, system, ws.incs.dt);
        TailValue v;
        v.lambda = s.lambda_min_c;
        v.policy = std::numeric_limits<double>::infinity();
        for (const auto& e : opt.policy.fixed) v.policy = std::min(v.policy, e.dot(s.c * e) / e.squaredNorm());
        for (int r = 0; r < opt.policy.random; ++r) {
          const Vec eta = random_direction(opt.seed, p, r, n);
          v.policy = std::min(v.policy, eta.dot(s.c * eta));
        }
        return v;
      },
      opt.exec);
  std::vector<double> values;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& v : res.values) {
    if (!v) continue;
    values.push_back(v->policy);
    lo = std::min(lo, v->lambda);
    hi = std::max(hi, v->lambda);
  }
  auto rep = scaling_report(values, res.excluded, opt);
  rep.min_lambda = lo;
  rep.max_lambda = hi;
  return rep;
}

// ---------------------------------------------------------------------------

InverseMomentReport inverse_moment_estimate(const std::vector<double>& lambda_min, double p) {
  if (!(p > 0.0)) throw InputError("moment order must be positive");
  InverseMomentReport rep;
  std::vector<double> x;
  std::map<int, std::pair<std::size_t, double>> by_decade;
  for (double l : lambda_min) {
    if (!(l > kEigenFloor)) {
      ++rep.excluded;
      continue;
    }
    const double v = std::pow(l, -p);
    x.push_back(v);
    auto& d = by_decade[static_cast<int>(std::floor(std::log10(l)))];
    ++d.first;
    d.second += v;
  }
  rep.used = x.size();
  if (x.empty()) return rep;
  const double total = std::accumulate(x.begin(), x.end(), 0.0);
  rep.estimate = total / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - rep.estimate) * (v - rep.estimate);
  rep.std_error = x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1) / static_cast<double>(x.size())) : 0.0;
  for (const auto& [e, d] : by_decade) rep.decades.push_back({e, d.first, d.second / total});
  return rep;
}

InverseMomentReport inverse_moment_estimate(const std::vector<CovarianceSample>& samples, double p) {
  std::vector<double> l;
  l.reserve(samples.size());
  for (const auto& s : samples) l.push_back(s.lambda_min_c);
  return inverse_moment_estimate(l, p);
}

// ---------------------------------------------------------------------------
// Density probe

namespace {

// Fields and their Jacobians in one tape: (m+1)*n values, then (m+1)*n*n
// Jacobian entries, row-major per field.
class HeunKernel {
 public:
  explicit HeunKernel(const SdeSystem& sys) : n_(sys.dimension()), m_(sys.noise_count()) {
    std::vector<Expr> outs;
    for (const auto& f : sys.fields()) outs.insert(outs.end(), f.components().begin(), f.components().end());
    for (const auto& f : sys.fields()) {
      auto d = f.jacobian();
      outs.insert(outs.end(), d.begin(), d.end());
    }
    tape_ = Tape(outs);
    out_.resize(outs.size());
  }
  int n() const { return n_; }
  int m() const { return m_; }
  const double* eval(const double* x) {
    tape_.evaluate(std::span<const double>(x, static_cast<std::size_t>(n_)), out_, scratch_);
    return out_.data();
  }

 private:
  int n_;
  int m_;
  Tape tape_;
  std::vector<double> out_;
  std::vector<double> scratch_;
};

template <int N, int M>
struct HeunStep {
  using V = Eigen::Matrix<double, N, 1>;
  using D = Eigen::Matrix<double, N, N>;
  using L = Eigen::Matrix<double, N, M>;

  // Increment and increment Jacobian at one point; v receives V_1..V_m.
  static void load(HeunKernel& k, const V& at, double dt, const double* dw, V& inc, D& jac, L& v) {
    const double* f = k.eval(at.data());
    const double* j = f + (M + 1) * N;
    constexpr int nn = N * N;
    for (int r = 0; r < N; ++r) inc[r] = f[r] * dt;
    for (int i = 0; i < M; ++i) {
      const double* vi = f + (i + 1) * N;
      for (int r = 0; r < N; ++r) {
        inc[r] += vi[r] * dw[i];
        v(r, i) = vi[r];
      }
    }
    for (int r = 0; r < N; ++r) {
      for (int c = 0; c < N; ++c) {
        double s = j[r * N + c] * dt;
        for (int i = 0; i < M; ++i) s += j[(i + 1) * nn + r * N + c] * dw[i];
        jac(r, c) = s;
      }
    }
  }

  // x -> xn with d = dxn/dx and l = dxn/d(dw).
  static void step(HeunKernel& k, const V& x, double dt, const double* dw, V& xn, D& d, L& l) {
    V a, abar;
    D am, abm;
    L vx, vbar;
    load(k, x, dt, dw, a, am, vx);
    const V xbar = x + a;
    load(k, xbar, dt, dw, abar, abm, vbar);
    xn = x + 0.5 * (a + abar);
    d = D::Identity() + 0.5 * am + 0.5 * (abm * (D::Identity() + am));
    l = 0.5 * (vx + vbar) + 0.5 * (abm * vx);
  }
};

template <int N>
double solve_component(const Eigen::Matrix<double, N, N>& m, const Eigen::Matrix<double, N, 1>& g, int j) {
  // g^T M^{-1} e_j
  return g.dot(m.ldlt().solve(Eigen::Matrix<double, N, 1>::Unit(j)));
}

template <int N, int M>
ProbeSample probe_impl(HeunKernel& kern, const Vec& x0, const IncrementGrid& incs, int direction, double bump) {
  using S = HeunStep<N, M>;
  using V = typename S::V;
  using D = typename S::D;
  using L = typename S::L;
  const std::size_t steps = incs.steps();

  std::vector<V, Eigen::aligned_allocator<V>> xs(steps + 1);
  std::vector<D, Eigen::aligned_allocator<D>> ms(steps + 1), ds(steps);
  std::vector<L, Eigen::aligned_allocator<L>> ls(steps);
  xs[0] = x0;
  ms[0].setZero();
  for (std::size_t s = 0; s < steps; ++s) {
    S::step(kern, xs[s], incs.dt[s], incs.dw.data() + s * M, xs[s + 1], ds[s], ls[s]);
    if (!xs[s + 1].allFinite()) throw ExplosionError(s);
    ms[s + 1] = ds[s] * ms[s] * ds[s].transpose() + incs.dt[s] * (ls[s] * ls[s].transpose());
  }
  const D mal = 0.5 * (ms[steps] + ms[steps].transpose());

  ProbeSample out;
  out.terminal = xs[steps];
  out.malliavin = mal;
  Eigen::SelfAdjointEigenSolver<D> es(mal, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues()[0];
  const double hi = es.eigenvalues()[N - 1];
  out.condition = lo > kEigenFloor * std::max(1.0, hi) ? hi / lo : std::numeric_limits<double>::infinity();
  if (!std::isfinite(out.condition)) throw NumericalAbort("singular Malliavin matrix");

  out.u.assign(steps * M, 0.0);
  D pmat = D::Identity();
  for (std::size_t s = steps; s-- > 0;) {
    const L lt = pmat * ls[s];
    for (int i = 0; i < M; ++i) out.u[s * M + i] = solve_component<N>(mal, lt.col(i), direction);
    pmat = pmat * ds[s];
  }

  // d_{s,i} u_{s,i}: bump the increment, rerun from step s on.
  out.du.assign(steps * M, 0.0);
  double dwb[M] = {};
  V x, xn, g;
  D d, mb;
  L l;
  for (std::size_t s = 0; s < steps; ++s) {
    for (int i = 0; i < M; ++i) {
      double u_pm[2];
      for (int side = 0; side < 2; ++side) {
        std::copy(incs.dw.begin() + s * M, incs.dw.begin() + (s + 1) * M, dwb);
        dwb[i] += side == 0 ? bump : -bump;
        S::step(kern, xs[s], incs.dt[s], dwb, x, d, l);
        mb = d * ms[s] * d.transpose() + incs.dt[s] * (l * l.transpose());
        g = l.col(i);
        for (std::size_t r = s + 1; r < steps; ++r) {
          S::step(kern, x, incs.dt[r], incs.dw.data() + r * M, xn, d, l);
          mb = d * mb * d.transpose() + incs.dt[r] * (l * l.transpose());
          g = d * g;
          x = xn;
        }
        if (!x.allFinite()) throw ExplosionError(s);
        const D sym = 0.5 * (mb + mb.transpose());
        u_pm[side] = solve_component<N>(sym, g, direction);
      }
      out.du[s * M + i] = (u_pm[0] - u_pm[1]) / (2.0 * bump);
    }
  }

  double ito = 0.0;
  double corr = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    for (int i = 0; i < M; ++i) {
      ito += out.u[s * M + i] * incs.dw[s * M + i];
      corr += out.du[s * M + i] * incs.dt[s];
    }
  }
  out.skorokhod = ito - corr;
  return out;
}

template <int N>
ProbeSample probe_dispatch_m(HeunKernel& k, const Vec& x0, const IncrementGrid& incs, int dir, double bump) {
  switch (k.m()) {
    case 1:
      return probe_impl<N, 1>(k, x0, incs, dir, bump);
    case 2:
      return probe_impl<N, 2>(k, x0, incs, dir, bump);
    case 3:
      return probe_impl<N, 3>(k, x0, incs, dir, bump);
    default:
      return probe_impl<N, 4>(k, x0, incs, dir, bump);
  }
}

ProbeSample probe_dispatch(HeunKernel& k, const Vec& x0, const IncrementGrid& incs, int dir, double bump) {
  switch (k.n()) {
    case 1:
      return probe_dispatch_m<1>(k, x0, incs, dir, bump);
    case 2:
      return probe_dispatch_m<2>(k, x0, incs, dir, bump);
    case 3:
      return probe_dispatch_m<3>(k, x0, incs, dir, bump);
    default:
      return probe_dispatch_m<4>(k, x0, incs, dir, bump);
  }
}

void check_probe_inputs(const SdeSystem& sys, const Vec& x0, int direction, double bump) {
  const int n = sys.dimension();
  const int m = sys.noise_count();
  if (n > 4 || m > 4) throw InputError("density probe supports n, m <= 4");
  if (direction < 0 || direction >= n) throw InputError("probe direction out of range");
  if (x0.size() != n) throw InputError("initial state does not match the system");
  if (!(bump > 0.0)) throw InputError("bump must be positive");
}

}  // namespace

ProbeSample probe_sample(const SdeSystem& sys, const Vec& x0, const IncrementGrid& incs, int direction, double bump) {
  check_probe_inputs(sys, x0, direction, bump);
  if (incs.m != sys.noise_count()) throw InputError("increment grid does not match the system");
  HeunKernel k(sys);
  return probe_dispatch(k, x0, incs, direction, bump);
}

ProbeResult ibp_density_probe(const SdeSystem& system, const Vec& x0, const Expr& observable, const ProbeOptions& opt) {
  const int n = system.dimension();
  auto vars = observable.variables();
  if (!vars.empty() && vars.back() >= n) throw InputError("observable references a variable outside the state");
  check_probe_inputs(system, x0, opt.direction, opt.bump);
  std::vector<Expr> outs{observable, derivative(observable, opt.direction)};
  const Tape tape(outs);

  struct Ws {
    IncrementGrid incs;
    HeunKernel kernel;
    std::vector<double> scratch;
  };
  GridSpec g = opt.grid;
  g.noise_count = system.noise_count();
  Ws ws0{zero_increments(g), HeunKernel(system), {}};
  auto res = map_paths<std::pair<double, double>>(
      opt.paths, ws0,
      [&](std::size_t p, Ws& ws) {
        sample_increments_into(ws.incs, opt.seed, p);
        const auto s = probe_dispatch(ws.kernel, x0, ws.incs, opt.direction, opt.bump);
        if (s.condition > opt.max_condition) {
          throw NumericalAbort(fmt::format("Malliavin matrix condition number {:.3e}", s.condition));
        }
        double val[2];
        tape.evaluate(std::span<const double>(s.terminal.data(), static_cast<std::size_t>(n)), val, ws.scratch);
        return std::pair<double, double>{val[1], val[0] * s.skorokhod};
      },
      opt.exec);
  if (res.exclusion_rate() > opt.max_exclusion) {
    throw NumericalAbort(fmt::format("density probe excluded {} of {} paths", res.excluded, opt.paths));
  }

  ProbeResult r;
  r.excluded = res.excluded;
  r.used = res.included();
  if (r.used < 2) throw NumericalAbort("density probe has fewer than two usable paths");
  auto stats = [&](auto f, double& mean, double& se) {
    mean = 0.0;
    std::size_t k = 0;
    for (const auto& v : res.values) {
      if (v) mean += (f(*v) - mean) / static_cast<double>(++k);
    }
    double ss = 0.0;
    for (const auto& v : res.values) {
      if (v) ss += (f(*v) - mean) * (f(*v) - mean);
    }
    se = std::sqrt(ss / static_cast<double>(k - 1) / static_cast<double>(k));
  };
  stats([](const auto& v) { return v.first; }, r.lhs, r.lhs_stderr);
  stats([](const auto& v) { return v.second; }, r.rhs, r.rhs_stderr);
  stats([](const auto& v) { return v.first - v.second; }, r.difference, r.difference_stderr);
  r.z = r.difference_stderr > 0 ? r.difference / r.difference_stderr : (r.difference == 0 ? 0.0 : HUGE_VAL);
  return r;
}

// ---------------------------------------------------------------------------

std::vector<double> kde_density(const std::vector<double>& samples, double bandwidth, const std::vector<double>& grid,
                                const EnsembleOptions& opt) {
  if (!(bandwidth > 0.0)) throw InputError("bandwidth must be positive");
  if (samples.empty()) throw InputError("no samples for the density estimate");
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  const double reach = 9.0 * bandwidth;  // kernel below 1e-17 beyond
  const double norm = 1.0 / (static_cast<double>(sorted.size()) * bandwidth * std::sqrt(2.0 * M_PI));
  auto res = map_paths<double>(
      grid.size(),
      [&](std::size_t i) {
        const double x = grid[i];
        auto lo = std::lower_bound(sorted.begin(), sorted.end(), x - reach);
        auto hi = std::upper_bound(lo, sorted.end(), x + reach);
        double s = 0.0;
        for (auto it = lo; it != hi; ++it) {
          const double z = (x - *it) / bandwidth;
          s += std::exp(-0.5 * z * z);
        }
        return s * norm;
      },
      opt);
  std::vector<double> out;
  out.reserve(grid.size());
  for (const auto& v : res.values) out.push_back(*v);
  return out;
}

double kde_mass_outside(const std::vector<double>& samples, double bandwidth, double lo, double hi) {
  if (!(bandwidth > 0.0)) throw InputError("bandwidth must be positive");
  if (samples.empty()) throw InputError("no samples for the density estimate");
  if (!(lo < hi)) throw InputError("interval is empty");
  // Phi(z) = erfc(-z / sqrt 2) / 2
  double s = 0.0;
  for (double x : samples) {
    s += 0.5 * std::erfc((x - lo) / (bandwidth * M_SQRT2)) + 0.5 * std::erfc((hi - x) / (bandwidth * M_SQRT2));
  }
  return s / static_cast<double>(samples.size());
}

}  // namespace malliavin
