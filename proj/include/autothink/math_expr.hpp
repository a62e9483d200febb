#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "autothink/rng.hpp"

namespace autothink::math {

using Rational = boost::multiprecision::cpp_rational;

class SyntaxError : public std::runtime_error {
 public:
  SyntaxError(const std::string& what, std::size_t position)
      : std::runtime_error(what + " at position " + std::to_string(position)), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class UndefinedEverywhere : public std::runtime_error {
 public:
  UndefinedEverywhere() : std::runtime_error("no valid sample point found") {}
};

enum class Op { Number, Constant, Variable, Neg, Add, Sub, Mul, Div, Pow, Func };

enum class Fn { Sqrt, Abs, Ln, Log10, Sin, Cos, Tan, Exp };

inline std::string_view fn_name(Fn f) {
  switch (f) {
    case Fn::Sqrt: return "sqrt";
    case Fn::Abs: return "abs";
    case Fn::Ln: return "ln";
    case Fn::Log10: return "log10";
    case Fn::Sin: return "sin";
    case Fn::Cos: return "cos";
    case Fn::Tan: return "tan";
    case Fn::Exp: return "exp";
  }
  return "?";
}

// Expression tree node. Literals keep their exact rational value; named
// constants and variables are stored by name.
struct MathExpr {
  Op op = Op::Number;
  Rational value;
  std::string name;
  Fn fn = Fn::Sqrt;
  std::vector<MathExpr> args;

  static MathExpr number(Rational v) {
    MathExpr e;
    e.value = std::move(v);
    return e;
  }
  static MathExpr symbol(Op op, std::string name) {
    MathExpr e;
    e.op = op;
    e.name = std::move(name);
    return e;
  }
  static MathExpr node(Op op, std::vector<MathExpr> args) {
    MathExpr e;
    e.op = op;
    e.args = std::move(args);
    return e;
  }
  static MathExpr call(Fn f, MathExpr arg) {
    MathExpr e = node(Op::Func, {std::move(arg)});
    e.fn = f;
    return e;
  }
};

// Prefix rendering, e.g. "Mul(2, Add(x, 1))".
inline std::string to_string(const MathExpr& e) {
  auto binary = [&](std::string_view name) {
    return std::string(name) + "(" + to_string(e.args[0]) + ", " + to_string(e.args[1]) + ")";
  };
  switch (e.op) {
    case Op::Number: {
      const auto& v = e.value;
      if (denominator(v) == 1) return numerator(v).str();
      return numerator(v).str() + "/" + denominator(v).str();
    }
    case Op::Constant:
    case Op::Variable: return e.name;
    case Op::Neg: return "Neg(" + to_string(e.args[0]) + ")";
    case Op::Add: return binary("Add");
    case Op::Sub: return binary("Sub");
    case Op::Mul: return binary("Mul");
    case Op::Div: return binary("Div");
    case Op::Pow: return binary("Pow");
    case Op::Func: return std::string(fn_name(e.fn)) + "(" + to_string(e.args[0]) + ")";
  }
  return "?";
}

namespace detail {

inline void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}

// Reads a balanced {...} group starting at s[pos] == '{'; returns the
// inner text and moves pos past the closing brace.
inline std::string brace_group(const std::string& s, std::size_t& pos) {
  if (pos >= s.size() || s[pos] != '{') throw SyntaxError("expected '{'", pos);
  int depth = 0;
  const std::size_t start = pos + 1;
  for (; pos < s.size(); ++pos) {
    if (s[pos] == '{') ++depth;
    if (s[pos] == '}' && --depth == 0) {
      std::string inner = s.substr(start, pos - start);
      ++pos;
      return inner;
    }
  }
  throw SyntaxError("unbalanced '{'", start - 1);
}

// Rewrites the common LaTeX and Unicode spellings into the plain grammar.
inline std::string normalize(std::string_view input) {
  std::string s(input);
  replace_all(s, "−", "-");
  replace_all(s, "×", "*");
  replace_all(s, "÷", "/");
  replace_all(s, "π", "pi");
  replace_all(s, "\\left", "");
  replace_all(s, "\\right", "");
  replace_all(s, "\\cdot", "*");
  replace_all(s, "\\times", "*");
  replace_all(s, "\\div", "/");
  replace_all(s, "\\dfrac", "\\frac");
  replace_all(s, "\\tfrac", "\\frac");

  std::string out;
  for (std::size_t i = 0; i < s.size();) {
    if (s.compare(i, 5, "\\frac") == 0) {
      i += 5;
      const std::string num = brace_group(s, i);
      const std::string den = brace_group(s, i);
      out += "((" + normalize(num) + ")/(" + normalize(den) + "))";
    } else if (s.compare(i, 5, "\\sqrt") == 0) {
      i += 5;
      out += "sqrt(" + normalize(brace_group(s, i)) + ")";
    } else if (s[i] == '\\') {
      ++i;  // \pi, \ln, \sin ...
    } else if (s[i] == '{') {
      out += '(';
      ++i;
    } else if (s[i] == '}') {
      out += ')';
      ++i;
    } else {
      out += s[i++];
    }
  }
  return out;
}

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, End };

struct Token {
  Tok kind;
  std::size_t pos;
  std::string text;
};

inline const std::map<std::string, Fn, std::less<>>& functions() {
  static const std::map<std::string, Fn, std::less<>> table = {
      {"sqrt", Fn::Sqrt}, {"abs", Fn::Abs}, {"ln", Fn::Ln},   {"log10", Fn::Log10},
      {"sin", Fn::Sin},   {"cos", Fn::Cos}, {"tan", Fn::Tan}, {"exp", Fn::Exp},
  };
  return table;
}

inline bool is_constant_name(std::string_view s) { return s == "pi" || s == "e"; }

// A run of letters is split greedily: known function and constant names
// first (longest match), otherwise single-letter variables. "2xy" is 2*x*y.
inline std::vector<Token> tokenize(const std::string& s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const std::size_t start = i;
      bool dot = false;
      while (i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) || (s[i] == '.' && !dot))) {
        if (s[i] == '.') dot = true;
        ++i;
      }
      if (s.compare(start, i - start, ".") == 0) throw SyntaxError("lone '.'", start);
      out.push_back({Tok::Number, start, s.substr(start, i - start)});
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t best = 0;
      for (const auto& [name, fn] : functions())
        if (s.compare(i, name.size(), name) == 0) best = std::max(best, name.size());
      for (std::string_view name : {"pi", "e"})
        if (s.compare(i, name.size(), name) == 0) best = std::max(best, name.size());
      if (best == 0) {
        best = 1;
        // x_1, a_12 style subscripts
        if (i + 1 < s.size() && s[i + 1] == '_') {
          std::size_t j = i + 2;
          while (j < s.size() && std::isalnum(static_cast<unsigned char>(s[j]))) ++j;
          if (j > i + 2) best = j - i;
        }
      }
      out.push_back({Tok::Ident, i, s.substr(i, best)});
      i += best;
      continue;
    }
    Tok k;
    switch (c) {
      case '+': k = Tok::Plus; break;
      case '-': k = Tok::Minus; break;
      case '*': k = Tok::Star; break;
      case '/': k = Tok::Slash; break;
      case '^': k = Tok::Caret; break;
      case '(':
      case '[': k = Tok::LParen; break;
      case ')':
      case ']': k = Tok::RParen; break;
      default: throw SyntaxError(std::string("unexpected character '") + c + "'", i);
    }
    out.push_back({k, i, std::string(1, c)});
    ++i;
  }
  out.push_back({Tok::End, s.size(), ""});
  return out;
}

inline Rational parse_decimal(const std::string& text) {
  const auto dot = text.find('.');
  if (dot == std::string::npos) {
    const auto nz = std::min(text.find_first_not_of('0'), text.size() - 1);
    return Rational(boost::multiprecision::cpp_int(text.substr(nz)));
  }
  std::string digits = text.substr(0, dot) + text.substr(dot + 1);
  // cpp_int reads a leading 0 as an octal prefix
  digits.erase(0, std::min(digits.find_first_not_of('0'), digits.size()));
  if (digits.empty()) digits = "0";
  boost::multiprecision::cpp_int den = 1;
  for (std::size_t k = dot + 1; k < text.size(); ++k) den *= 10;
  return Rational(boost::multiprecision::cpp_int(digits), den);
}

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  MathExpr parse() {
    MathExpr e = expr();
    if (peek().kind != Tok::End) throw SyntaxError("unexpected '" + peek().text + "'", peek().pos);
    return e;
  }

 private:
  const Token& peek() const { return toks_[i_]; }
  const Token& take() { return toks_[i_++]; }

  MathExpr expr() {
    MathExpr lhs = term();
    while (peek().kind == Tok::Plus || peek().kind == Tok::Minus) {
      const Op op = take().kind == Tok::Plus ? Op::Add : Op::Sub;
      lhs = MathExpr::node(op, {std::move(lhs), term()});
    }
    return lhs;
  }

  static bool starts_primary(Tok k) { return k == Tok::Number || k == Tok::Ident || k == Tok::LParen; }

  MathExpr term() {
    MathExpr lhs = unary();
    for (;;) {
      if (peek().kind == Tok::Star || peek().kind == Tok::Slash) {
        const Op op = take().kind == Tok::Star ? Op::Mul : Op::Div;
        lhs = MathExpr::node(op, {std::move(lhs), unary()});
      } else if (starts_primary(peek().kind)) {
        // Implicit multiplication: "2x", "2(x+1)", "(a)(b)". Two bare
        // numbers in a row are rejected.
        if (peek().kind == Tok::Number && toks_[i_ - 1].kind == Tok::Number)
          throw SyntaxError("adjacent numbers", peek().pos);
        lhs = MathExpr::node(Op::Mul, {std::move(lhs), power()});
      } else {
        return lhs;
      }
    }
  }

  MathExpr unary() {
    if (peek().kind == Tok::Minus) {
      take();
      return MathExpr::node(Op::Neg, {unary()});
    }
    if (peek().kind == Tok::Plus) {
      take();
      return unary();
    }
    return power();
  }

  MathExpr power() {
    MathExpr base = primary();
    if (peek().kind == Tok::Caret) {
      take();
      return MathExpr::node(Op::Pow, {std::move(base), unary()});
    }
    return base;
  }

  MathExpr primary() {
    const Token& t = take();
    switch (t.kind) {
      case Tok::Number: return MathExpr::number(parse_decimal(t.text));
      case Tok::LParen: {
        MathExpr inner = expr();
        if (peek().kind != Tok::RParen) throw SyntaxError("expected ')'", peek().pos);
        take();
        return inner;
      }
      case Tok::Ident: {
        if (auto it = functions().find(t.text); it != functions().end()) {
          if (peek().kind != Tok::LParen) throw SyntaxError("expected '(' after " + t.text, peek().pos);
          take();
          MathExpr arg = expr();
          if (peek().kind != Tok::RParen) throw SyntaxError("expected ')'", peek().pos);
          take();
          return MathExpr::call(it->second, std::move(arg));
        }
        if (is_constant_name(t.text)) return MathExpr::symbol(Op::Constant, t.text);
        return MathExpr::symbol(Op::Variable, t.text);
      }
      case Tok::End: throw SyntaxError("unexpected end of input", t.pos);
      default: throw SyntaxError("unexpected '" + t.text + "'", t.pos);
    }
  }

  std::vector<Token> toks_;
  std::size_t i_ = 0;
};

inline std::optional<Rational> exact_sqrt(const Rational& v) {
  using boost::multiprecision::cpp_int;
  if (v < 0) return std::nullopt;
  const cpp_int n = numerator(v), d = denominator(v);
  const cpp_int rn = boost::multiprecision::sqrt(n), rd = boost::multiprecision::sqrt(d);
  if (rn * rn != n || rd * rd != d) return std::nullopt;
  return Rational(rn, rd);
}

inline Rational ipow(Rational base, unsigned exp) {
  Rational result = 1;
  while (exp) {
    if (exp & 1u) result *= base;
    base *= base;
    exp >>= 1u;
  }
  return result;
}

}  // namespace detail

/// Parses a math answer. Accepts implicit multiplication ("2x", "2(x+1)"),
/// unary minus and light LaTeX (\frac, \sqrt, \cdot, \pi).
inline MathExpr parse_math(std::string_view text) {
  const std::string norm = detail::normalize(text);
  return detail::Parser(detail::tokenize(norm)).parse();
}

inline void collect_variables(const MathExpr& e, std::set<std::string>& out) {
  if (e.op == Op::Variable) out.insert(e.name);
  for (const auto& a : e.args) collect_variables(a, out);
}

/// Folds a variable-free expression to an exact rational when every step is
/// exact. Integer powers (|n| <= 4096) and perfect-square roots fold;
/// transcendental values and division by zero do not.
inline std::optional<Rational> fold_exact(const MathExpr& e) {
  switch (e.op) {
    case Op::Number: return e.value;
    case Op::Constant:
    case Op::Variable: return std::nullopt;
    case Op::Neg: {
      auto a = fold_exact(e.args[0]);
      if (!a) return std::nullopt;
      return Rational(-*a);
    }
    case Op::Func: {
      auto a = fold_exact(e.args[0]);
      if (!a) return std::nullopt;
      if (e.fn == Fn::Abs) return Rational(*a < 0 ? Rational(-*a) : *a);
      if (e.fn == Fn::Sqrt) return detail::exact_sqrt(*a);
      return std::nullopt;
    }
    default: break;
  }
  auto a = fold_exact(e.args[0]);
  if (!a) return std::nullopt;
  auto b = fold_exact(e.args[1]);
  if (!b) return std::nullopt;
  switch (e.op) {
    case Op::Add: return Rational(*a + *b);
    case Op::Sub: return Rational(*a - *b);
    case Op::Mul: return Rational(*a * *b);
    case Op::Div:
      if (*b == 0) return std::nullopt;
      return Rational(*a / *b);
    case Op::Pow: {
      if (denominator(*b) != 1) {
        // rational exponent p/2 of a perfect square
        if (denominator(*b) == 2 && numerator(*b) > 0) {
          auto root = detail::exact_sqrt(*a);
          if (!root) return std::nullopt;
          const auto p = numerator(*b);
          if (p > 4096) return std::nullopt;
          return detail::ipow(*root, static_cast<unsigned>(p));
        }
        return std::nullopt;
      }
      const auto n = numerator(*b);
      if (n > 4096 || n < -4096) return std::nullopt;
      const long k = static_cast<long>(n);
      if (k < 0 && *a == 0) return std::nullopt;
      Rational r = detail::ipow(*a, static_cast<unsigned>(k < 0 ? -k : k));
      if (k < 0) r = Rational(1) / r;
      return r;
    }
    default: return std::nullopt;
  }
}

using Assignment = std::map<std::string, double, std::less<>>;

/// Floating-point evaluation. Returns NaN wherever the expression is
/// undefined (division by zero, log of a non-positive number, ...).
inline double evaluate(const MathExpr& e, const Assignment& vars) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  switch (e.op) {
    case Op::Number: return e.value.convert_to<double>();
    case Op::Constant: return e.name == "pi" ? std::numbers::pi : std::numbers::e;
    case Op::Variable: {
      auto it = vars.find(e.name);
      return it == vars.end() ? nan : it->second;
    }
    case Op::Neg: return -evaluate(e.args[0], vars);
    case Op::Func: {
      const double a = evaluate(e.args[0], vars);
      switch (e.fn) {
        case Fn::Sqrt: return a < 0 ? nan : std::sqrt(a);
        case Fn::Abs: return std::fabs(a);
        case Fn::Ln: return a <= 0 ? nan : std::log(a);
        case Fn::Log10: return a <= 0 ? nan : std::log10(a);
        case Fn::Sin: return std::sin(a);
        case Fn::Cos: return std::cos(a);
        case Fn::Tan: return std::tan(a);
        case Fn::Exp: return std::exp(a);
      }
      return nan;
    }
    default: break;
  }
  const double a = evaluate(e.args[0], vars);
  const double b = evaluate(e.args[1], vars);
  switch (e.op) {
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div: return b == 0.0 ? nan : a / b;
    case Op::Pow:
      if (a == 0.0 && b < 0.0) return nan;
      return std::pow(a, b);
    default: return nan;
  }
}

struct EquivConfig {
  double rel_tol = 1e-6;
  double abs_floor = 1e-9;
  int sample_points = 16;
  int max_attempts = 256;
  double range_lo = -10.0;
  double range_hi = 10.0;
  double magnitude_cap = 1e12;
  std::uint64_t seed = 0xA07071;
};

inline bool values_agree(double a, double b, double rel_tol, double abs_floor) {
  const double diff = std::fabs(a - b);
  return diff <= std::max(rel_tol * std::max(std::fabs(a), std::fabs(b)), abs_floor);
}

/// Equivalence by exact rational folding, else by agreement at seeded
/// random points over the union of both variable sets. A variable present
/// on one side only must leave that side constant, or the sampled values
/// disagree. Points where either side is undefined or exceeds the
/// magnitude cap are rejected. Throws UndefinedEverywhere when no point
/// out of max_attempts is valid.
inline bool math_equiv(const MathExpr& candidate, const MathExpr& reference, const EquivConfig& cfg = {}) {
  if (!(cfg.rel_tol > 0)) throw std::invalid_argument("math_equiv: rel_tol must be positive");
  if (auto a = fold_exact(candidate)) {
    if (auto b = fold_exact(reference); b && *a == *b) return true;
  }
  std::set<std::string> names;
  collect_variables(candidate, names);
  collect_variables(reference, names);

  RngStream rng(cfg.seed);
  Assignment point;
  int valid = 0;
  for (int attempt = 0; attempt < cfg.max_attempts && valid < cfg.sample_points; ++attempt) {
    for (const auto& n : names) point[n] = rng.uniform(cfg.range_lo, cfg.range_hi);
    const double a = evaluate(candidate, point);
    const double b = evaluate(reference, point);
    auto ok = [&](double v) { return std::isfinite(v) && std::fabs(v) <= cfg.magnitude_cap; };
    if (!ok(a) || !ok(b)) continue;
    ++valid;
    if (!values_agree(a, b, cfg.rel_tol, cfg.abs_floor)) return false;
  }
  if (valid == 0) throw UndefinedEverywhere();
  return true;
}

inline bool math_equiv(std::string_view candidate, std::string_view reference, const EquivConfig& cfg = {}) {
  return math_equiv(parse_math(candidate), parse_math(reference), cfg);
}

}  // namespace autothink::math
