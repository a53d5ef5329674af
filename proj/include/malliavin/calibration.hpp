// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Frozen regression thresholds. config/calibration.json mirrors these values
// together with the seed and date of the calibration run.
#pragma once

#include <cstdint>

namespace malliavin::calibration {

inline constexpr std::uint64_t kSeed = 20260101;
inline constexpr const char* kDate = "2026-10-16";

// Small-eigenvalue tail of <eta, C eta> for Hoermander scenarios.
inline constexpr double kTailSlopeMin = 2.0;
inline constexpr double kFloorSlope = 0.25;

// Norris violation decay at r = 1/80 over the resolvable quarter-dyadic range.
inline constexpr double kNorrisDecayMin = 3.0;
inline constexpr double kNorrisR = 1.0 / 80;

// Cascade medians under <eta, C eta> < eps: median ||Z_V|| < eps^q per generation.
inline constexpr double kCascadeEpsilon = 0.25;
inline constexpr double kCascadeQ0 = 0.15;
inline constexpr double kCascadeQ1 = -0.6;

inline constexpr double kProbeMaxZ = 4.0;

}  // namespace malliavin::calibration
