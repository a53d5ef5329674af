// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Named SDE systems used by the tests and the command line:
//   brownian       dx = dW in R^d (elliptic)
//   geometric      dx = x o dW, x0 = 1
//   langevin       dq = p dt, dp = (-a q - p) dt + sqrt(2 T) dW, x0 = (1, 0)
//   counterexample dx = -sin(x) dt + cos(x) o dW, x0 = 0
//   degenerate     dx = e1 o dW in R^2, no drift (bracket condition fails)
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "malliavin/ensemble.hpp"
#include "malliavin/sde.hpp"

namespace malliavin {

struct ScenarioParams {
  int dimension = 1;         // brownian
  double potential = 1.0;    // langevin quadratic coefficient a
  double temperature = 1.0;  // langevin T
  std::optional<Vec> x0;
};

struct Scenario {
  std::string name;
  SdeSystem system;
  Vec x0;
  // Points where the bracket condition is checked.
  std::vector<Vec> test_points;
};

Scenario make_scenario(const std::string& name, const ScenarioParams& params = {});
const std::vector<std::string>& scenario_names();

struct ContainmentResult {
  double sup_abs = 0.0;
  std::size_t paths = 0;
  std::size_t excluded = 0;
};

// Runs the counterexample system from x0 = 0 and returns max |x_t| over all
// paths and grid times.
ContainmentResult counterexample_containment(std::size_t paths, const GridSpec& grid, std::uint64_t seed,
                                             const EnsembleOptions& opt = {});

}  // namespace malliavin
