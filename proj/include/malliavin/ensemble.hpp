// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Path ensembles. Each path is a pure function of its index; results are kept
// per path and folded by the caller in index order, so outputs do not depend
// on the thread count. The serial mode is the reference implementation.
#pragma once

#include <cstddef>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <omp.h>

#include "malliavin/errors.hpp"

namespace malliavin {

enum class Execution { Serial, Parallel };

struct EnsembleOptions {
  Execution execution = Execution::Parallel;
  int threads = 0;  // 0: OpenMP default
};

template <class R>
struct EnsembleResult {
  std::vector<std::optional<R>> values;
  std::size_t excluded = 0;
  // First few exclusion messages, keyed by path index.
  std::map<std::size_t, std::string> reasons;

  std::size_t included() const { return values.size() - excluded; }
  double exclusion_rate() const {
    return values.empty() ? 0.0 : static_cast<double>(excluded) / static_cast<double>(values.size());
  }
};

inline constexpr std::size_t kKeptReasons = 16;

// fn(path, workspace) -> R. A NumericalAbort excludes the path; any other
// exception is rethrown after the loop (lowest path index first). Each
// thread works on its own copy of `workspace`.
template <class R, class W, class Fn>
EnsembleResult<R> map_paths(std::size_t count, const W& workspace, Fn&& fn, const EnsembleOptions& opt = {}) {
  EnsembleResult<R> out;
  out.values.resize(count);
  std::mutex mu;
  std::map<std::size_t, std::exception_ptr> errors;
  std::size_t excluded = 0;

  auto body = [&](std::size_t p, W& ws) {
    try {
      out.values[p] = fn(p, ws);
    } catch (const NumericalAbort& e) {
      std::lock_guard lock(mu);
      ++excluded;
      if (out.reasons.size() < kKeptReasons || p < out.reasons.rbegin()->first) {
        out.reasons.emplace(p, e.what());
        if (out.reasons.size() > kKeptReasons) out.reasons.erase(std::prev(out.reasons.end()));
      }
    } catch (...) {
      std::lock_guard lock(mu);
      errors.emplace(p, std::current_exception());
    }
  };

  if (opt.execution == Execution::Serial) {
    W ws = workspace;
    for (std::size_t p = 0; p < count; ++p) body(p, ws);
  } else {
    const int threads = opt.threads > 0 ? opt.threads : omp_get_max_threads();
    const auto n = static_cast<long long>(count);
#pragma omp parallel num_threads(threads)
    {
      W ws = workspace;
#pragma omp for schedule(dynamic, 16)
      for (long long p = 0; p < n; ++p) body(static_cast<std::size_t>(p), ws);
    }
  }
  if (!errors.empty()) std::rethrow_exception(errors.begin()->second);
  out.excluded = excluded;
  return out;
}

struct NoWorkspace {};

template <class R, class Fn>
EnsembleResult<R> map_paths(std::size_t count, Fn&& fn, const EnsembleOptions& opt = {}) {
  return map_paths<R>(count, NoWorkspace{}, [&](std::size_t p, NoWorkspace&) { return fn(p); }, opt);
}

}  // namespace malliavin
