// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment commands. Each run writes CSV tables, summary.json and
// manifest.json into <out>/<command>-<seed>/.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace malliavin::cli {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "0.3.0";

enum ExitCode : int { kExitOk = 0, kExitInternal = 1, kExitInvariant = 2, kExitInput = 3, kExitNumerical = 4 };

const std::vector<std::string>& command_names();

// Every accepted key with its default value.
Json default_config(const std::string& command);

// Overlays `patch` on `base`; keys absent from `base` and type changes are errors.
void merge_config(Json& base, const Json& patch, const std::string& where = "");

// "key=value" or "a.b=value"; the value is read as JSON, else as a string.
void apply_override(Json& base, const std::string& assignment);

struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  std::filesystem::path out_root = "out";
  int threads = 0;  // 0: OpenMP default
  Json values;

  std::filesystem::path run_dir() const;
};

RunConfig make_config(const std::string& command, std::uint64_t seed,
                      const std::optional<std::filesystem::path>& config_file,
                      const std::vector<std::string>& overrides, const std::filesystem::path& out_root, int threads);

struct RunResult {
  int exit_code = kExitOk;
  std::string message;
  std::filesystem::path dir;
  std::vector<std::string> files;  // CSV and JSON outputs, manifest excluded
  Json summary;
};

// Never throws for run-time failures; they are mapped to exit codes and
// recorded in the manifest.
RunResult run(const RunConfig& config, std::ostream& log);

int main_entry(int argc, char** argv);

}  // namespace malliavin::cli
