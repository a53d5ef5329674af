// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
#include "malliavin/rng.hpp"

#include <cmath>
#include <numbers>

namespace malliavin {
namespace {

constexpr std::uint32_t kMulA = 0xD2511F53;
constexpr std::uint32_t kMulB = 0xCD9E8D57;
constexpr std::uint32_t kWeylA = 0x9E3779B9;
constexpr std::uint32_t kWeylB = 0xBB67AE85;

// Top bit of the step word separates the uniform stream from the normals.
constexpr std::uint64_t kUniformStream = 1ULL << 63;

PhiloxCounter make_counter(std::uint64_t path, std::uint64_t step, std::uint32_t slot) {
  return {static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32) ^ (slot << 16),
          static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32)};
}

PhiloxKey make_key(std::uint64_t seed) {
  return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

}  // namespace

PhiloxCounter philox4x32(PhiloxCounter c, PhiloxKey k) {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMulA) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMulB) * c[2];
    c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
         static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
    k[0] += kWeylA;
    k[1] += kWeylB;
  }
  return c;
}

std::array<double, 2> normal_pair(std::uint64_t seed, std::uint64_t path, std::uint64_t step, std::uint32_t pair) {
  auto r = philox4x32(make_counter(path, step & ~kUniformStream, pair), make_key(seed));
  const double u1 = to_unit_open((static_cast<std::uint64_t>(r[0]) << 32) | r[1]);
  const double u2 = to_unit_open((static_cast<std::uint64_t>(r[2]) << 32) | r[3]);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

double standard_normal(std::uint64_t seed, std::uint64_t path, std::uint64_t step, std::uint32_t component) {
  return normal_pair(seed, path, step, component / 2)[component % 2];
}

double uniform01(std::uint64_t seed, std::uint64_t path, std::uint64_t step, std::uint32_t component) {
  auto r = philox4x32(make_counter(path, step | kUniformStream, component / 2), make_key(seed));
  return component % 2 == 0 ? to_unit_open((static_cast<std::uint64_t>(r[0]) << 32) | r[1])
                            : to_unit_open((static_cast<std::uint64_t>(r[2]) << 32) | r[3]);
}

}  // namespace malliavin
