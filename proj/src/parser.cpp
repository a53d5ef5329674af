// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
#include "malliavin/parser.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>

#include "malliavin/errors.hpp"

namespace malliavin {
namespace {

class Parser {
 public:
  Parser(std::string_view text, const SymbolResolver& resolve) : text_(text), resolve_(resolve) {}

  std::vector<Expr> components() {
    std::vector<Expr> out;
    out.push_back(expression());
    skip_space();
    while (peek() == ';') {
      advance();
      out.push_back(expression());
      skip_space();
    }
    if (!at_end()) fail("unexpected character '" + std::string(1, peek()) + "'");
    return out;
  }

 private:
  Expr expression() {
    std::vector<Expr> terms{term()};
    for (;;) {
      skip_space();
      char c = peek();
      if (c != '+' && c != '-') break;
      advance();
      Expr t = term();
      terms.push_back(c == '+' ? t : -t);
    }
    return sum(std::move(terms));
  }

  Expr term() {
    std::vector<Expr> factors{unary()};
    for (;;) {
      skip_space();
      if (peek() != '*') break;
      advance();
      factors.push_back(unary());
    }
    return product(std::move(factors));
  }

  Expr unary() {
    skip_space();
    if (peek() == '-') {
      advance();
      return -unary();
    }
    return power();
  }

  Expr power() {
    Expr base = primary();
    skip_space();
    if (peek() != '^') return base;
    advance();
    skip_space();
    auto [line, col] = location();
    std::size_t start = pos_;
    while (std::isdigit(static_cast<unsigned char>(peek()))) advance();
    if (start == pos_) fail("expected a non-negative integer exponent", line, col);
    int k = 0;
    auto res = std::from_chars(text_.data() + start, text_.data() + pos_, k);
    if (res.ec != std::errc{}) fail("exponent out of range", line, col);
    return pow(base, k);
  }

  Expr primary() {
    skip_space();
    if (at_end()) fail("unexpected end of input");
    char c = peek();
    if (c == '(') {
      advance();
      Expr e = expression();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      auto [line, col] = location();
      std::string name = identifier();
      skip_space();
      if (peek() == '(') {
        if (name != "sin" && name != "cos" && name != "exp") fail("unknown function '" + name + "'", line, col);
        advance();
        Expr arg = expression();
        expect(')');
        return name == "sin" ? sin(arg) : name == "cos" ? cos(arg) : exp(arg);
      }
      auto id = resolve_(name);
      if (!id) fail("unknown symbol '" + name + "'", line, col);
      return Expr::variable(*id);
    }
    fail("unexpected character '" + std::string(1, c) + "'");
  }

  Expr number() {
    auto [line, col] = location();
    std::size_t start = pos_;
    while (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '.') advance();
    if (peek() == 'e' || peek() == 'E') {
      std::size_t save = pos_;
      advance();
      if (peek() == '+' || peek() == '-') advance();
      if (!std::isdigit(static_cast<unsigned char>(peek()))) {
        pos_ = save;
      } else {
        while (std::isdigit(static_cast<unsigned char>(peek()))) advance();
      }
    }
    std::string lexeme(text_.substr(start, pos_ - start));
    char* end = nullptr;
    double v = std::strtod(lexeme.c_str(), &end);
    if (end != lexeme.c_str() + lexeme.size()) fail("malformed number '" + lexeme + "'", line, col);
    return Expr::constant(v);
  }

  std::string identifier() {
    std::size_t start = pos_;
    while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_') advance();
    return std::string(text_.substr(start, pos_ - start));
  }

  void expect(char c) {
    skip_space();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    advance();
  }

  void skip_space() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(peek()))) advance();
  }

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }
  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }
  std::pair<int, int> location() const { return {line_, col_}; }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, line_, col_); }
  [[noreturn]] void fail(const std::string& msg, int line, int col) const { throw ParseError(msg, line, col); }

  std::string_view text_;
  const SymbolResolver& resolve_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

}  // namespace

std::vector<Expr> parse_components(std::string_view text, const SymbolResolver& resolve) {
  return Parser(text, resolve).components();
}

Expr parse_expression(std::string_view text, const SymbolResolver& resolve) {
  auto c = parse_components(text, resolve);
  if (c.size() != 1) throw InputError("expected a single expression, got " + std::to_string(c.size()));
  return c.front();
}

SymbolResolver named_symbols(std::vector<std::string> names) {
  return [names = std::move(names)](std::string_view s) -> std::optional<int> {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == s) return static_cast<int>(i);
    }
    return std::nullopt;
  };
}

SymbolResolver indexed_symbols(char prefix, int count) {
  return [prefix, count](std::string_view s) -> std::optional<int> {
    if (s.size() < 2 || s[0] != prefix) return std::nullopt;
    int k = 0;
    auto res = std::from_chars(s.data() + 1, s.data() + s.size(), k);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || k < 1 || k > count) return std::nullopt;
    return k - 1;
  };
}

}  // namespace malliavin
