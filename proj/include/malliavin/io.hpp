// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// CSV tables, SHA-256 digests and atomic file writes.
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

namespace malliavin {

std::string sha256_hex(std::string_view data);

// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

// Doubles are written with the shortest round-trip representation.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  template <typename... Ts>
  void row(const Ts&... values) {
    std::vector<std::string> cells{cell(values)...};
    add(std::move(cells));
  }
  void add(std::vector<std::string> cells);

  std::size_t rows() const { return rows_.size(); }
  std::string str() const;

 private:
  template <typename T>
  static std::string cell(const T& v) {
    if constexpr (std::is_convertible_v<T, std::string_view>) {
      return std::string(std::string_view(v));
    } else if constexpr (std::is_same_v<T, bool>) {
      return v ? "1" : "0";
    } else {
      return fmt::format("{}", v);
    }
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace malliavin
