// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Text grammar for expressions:
//
//   components := expr (';' expr)*
//   expr       := term (('+' | '-') term)*
//   term       := unary ('*' unary)*
//   unary      := '-' unary | power
//   power      := primary ('^' integer)?
//   primary    := number | name | func '(' expr ')' | '(' expr ')'
//   func       := sin | cos | exp
//
// Whitespace (including newlines) is insignificant. Errors carry 1-based
// line and column of the offending character.
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "malliavin/expr.hpp"

namespace malliavin {

// Maps an identifier to a variable id, or nullopt for an unknown name.
using SymbolResolver = std::function<std::optional<int>(std::string_view)>;

std::vector<Expr> parse_components(std::string_view text, const SymbolResolver& resolve);
Expr parse_expression(std::string_view text, const SymbolResolver& resolve);

// Resolves names from an explicit list; index in the list is the variable id.
SymbolResolver named_symbols(std::vector<std::string> names);

// x1..xn -> 0..n-1.
SymbolResolver indexed_symbols(char prefix, int count);

}  // namespace malliavin
