// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Counter-based random numbers. Every variate is a pure function of
// (seed, path, step, component), so ensembles are reproducible under any
// parallel schedule.
#pragma once

#include <array>
#include <cstdint>

namespace malliavin {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

// Philox4x32 with 10 rounds.
PhiloxCounter philox4x32(PhiloxCounter counter, PhiloxKey key);

// Uniform on the open interval (0, 1) from 64 random bits.
inline double to_unit_open(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

// Standard normals for components (2c, 2c+1) of one step, by Box-Muller.
std::array<double, 2> normal_pair(std::uint64_t seed, std::uint64_t path, std::uint64_t step, std::uint32_t pair);

// Standard normal for one (seed, path, step, component).
double standard_normal(std::uint64_t seed, std::uint64_t path, std::uint64_t step, std::uint32_t component);

// Uniform on (0,1) for one (seed, path, step, component); a separate stream
// from the normals.
double uniform01(std::uint64_t seed, std::uint64_t path, std::uint64_t step, std::uint32_t component);

}  // namespace malliavin
