// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
#include "malliavin/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "malliavin/errors.hpp"

namespace malliavin {
namespace {

std::vector<std::string> coordinate_names(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("x" + std::to_string(i + 1));
  return out;
}

Vec start(const ScenarioParams& p, Vec fallback) {
  if (!p.x0) return fallback;
  if (p.x0->size() != fallback.size()) throw InputError("x0 has the wrong dimension for this scenario");
  return *p.x0;
}

std::vector<Vec> default_points(const Vec& x0) {
  std::vector<Vec> pts{x0};
  const auto n = x0.size();
  Vec a = Vec::Constant(n, 0.5), b(n);
  for (Eigen::Index i = 0; i < n; ++i) b[i] = (i % 2 == 0) ? -1.3 : 0.7;
  pts.push_back(a);
  pts.push_back(b);
  return pts;
}

}  // namespace

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names{"brownian", "geometric", "langevin", "counterexample", "degenerate"};
  return names;
}

Scenario make_scenario(const std::string& name, const ScenarioParams& p) {
  if (name == "brownian") {
    const int d = p.dimension;
    if (d < 1) throw InputError("brownian dimension must be positive");
    std::vector<VectorField> diff;
    for (int i = 0; i < d; ++i) diff.push_back(VectorField::constant(Vec::Unit(d, i), "V" + std::to_string(i + 1)));
    Vec x0 = start(p, Vec::Zero(d));
    return {name, SdeSystem(VectorField::zero(d, "V0"), diff, coordinate_names(d)), x0, default_points(x0)};
  }
  if (name == "geometric") {
    std::vector<std::string> names{"x"};
    std::vector<VectorField> diff{VectorField::parse("x", names, "V1")};
    Vec x0 = start(p, Vec::Ones(1));
    return {name, SdeSystem(VectorField::zero(1, "V0"), diff, names), x0, default_points(x0)};
  }
  if (name == "langevin") {
    if (!(p.temperature > 0.0)) throw InputError("langevin temperature must be positive");
    if (!std::isfinite(p.potential)) throw InputError("langevin potential must be finite");
    std::vector<std::string> names{"q", "p"};
    VectorField drift = VectorField::parse(fmt::format("p ; -{} * q - p", p.potential), names, "V0");
    Vec sigma(2);
    sigma << 0.0, std::sqrt(2.0 * p.temperature);
    std::vector<VectorField> diff{VectorField::constant(sigma, "V1")};
    Vec x0 = start(p, Vec::Unit(2, 0));
    return {name, SdeSystem(drift, diff, names), x0, default_points(x0)};
  }
  if (name == "counterexample") {
    std::vector<std::string> names{"x"};
    VectorField drift = VectorField::parse("-sin(x)", names, "V0");
    std::vector<VectorField> diff{VectorField::parse("cos(x)", names, "V1")};
    Vec x0 = start(p, Vec::Zero(1));
    // cos vanishes at the interval ends; only the bracket spans there
    auto pts = default_points(x0);
    pts.push_back(Vec::Constant(1, std::numbers::pi / 2));
    pts.push_back(Vec::Constant(1, -std::numbers::pi / 2));
    return {name, SdeSystem(drift, diff, names), x0, pts};
  }
  if (name == "degenerate") {
    std::vector<VectorField> diff{VectorField::constant(Vec::Unit(2, 0), "V1")};
    Vec x0 = start(p, Vec::Zero(2));
    return {name, SdeSystem(VectorField::zero(2, "V0"), diff, coordinate_names(2)), x0, default_points(x0)};
  }
  throw InputError("unknown scenario '" + name + "'");
}

ContainmentResult counterexample_containment(std::size_t paths, const GridSpec& grid, std::uint64_t seed,
                                             const EnsembleOptions& opt) {
  Scenario sc = make_scenario("counterexample");
  GridSpec spec = grid;
  spec.noise_count = 1;
  struct Work {
    IncrementGrid g;
    FlowPath flow;
    KernelScratch ks;
  };
  Work proto{zero_increments(spec), {}, {}};
  IntegrateOptions io;
  io.track_jacobian = false;
  io.store_path = false;
  auto res = map_paths<double>(
      paths, proto,
      [&](std::size_t path, Work& w) {
        sample_increments_into(w.g, seed, path);
        integrate_into(w.flow, sc.system, sc.x0, w.g, io, w.ks);
        return w.flow.sup_abs();
      },
      opt);
  ContainmentResult out;
  out.paths = paths;
  out.excluded = res.excluded;
  for (const auto& v : res.values) {
    if (v) out.sup_abs = std::max(out.sup_abs, *v);
  }
  return out;
}

}  // namespace malliavin
