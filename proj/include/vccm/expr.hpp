// Copyright 2026 The vccm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

/**
 * @file expr.hpp
 * @brief Scalar expression language: parser, evaluator, and exact symbolic
 * differentiation.
 *
 * Expressions are immutable ASTs over named real variables, closed under the
 * operations needed to describe the plants and virtual systems handled by the
 * toolkit: {+, -, *, /, integer powers} and {neg, sin, cos, exp, ln, sqrt}.
 * Differentiation is exact; the only simplification applied is constant
 * folding and 0/1 elimination, so derived Jacobians stay auditable.
 */

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace vccm {

class ExprError : public std::runtime_error {
 public:
  explicit ExprError(const std::string& what) : std::runtime_error(what) {}
};

/// Parse failure; `position` is a 0-based character offset into the input.
class ParseError : public ExprError {
 public:
  ParseError(const std::string& what, std::size_t position)
      : ExprError(what + " at position " + std::to_string(position)),
        position(position) {}
  std::size_t position;
};

/// Evaluation failure (division by zero, ln of non-positive, sqrt of
/// negative, unbound variable). `node` holds the offending subexpression.
class DomainError : public ExprError {
 public:
  DomainError(const std::string& what, const std::string& node)
      : ExprError(what + " in '" + node + "'"), node(node) {}
  std::string node;
};

enum class ExprOp : std::uint8_t {
  kConst,
  kVar,
  kNeg,
  kSin,
  kCos,
  kExp,
  kLn,
  kSqrt,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kPow,  // integer exponent only
};

class Expr;

namespace detail {
struct ExprNode {
  ExprOp op = ExprOp::kConst;
  double value = 0.0;        // kConst
  std::string name;          // kVar
  int exponent = 0;          // kPow
  std::shared_ptr<const ExprNode> a, b;
};
}  // namespace detail

/// Immutable expression handle. Cheap to copy; safe to share across threads.
class Expr {
 public:
  Expr() : node_(constant_node(0.0)) {}

  static Expr constant(double v) { return Expr(constant_node(v)); }
  static Expr variable(const std::string& name) {
    auto n = std::make_shared<detail::ExprNode>();
    n->op = ExprOp::kVar;
    n->name = name;
    return Expr(std::move(n));
  }

  ExprOp op() const { return node_->op; }
  bool is_constant() const { return node_->op == ExprOp::kConst; }
  bool is_constant(double v) const {
    return is_constant() && node_->value == v;
  }
  double constant_value() const { return node_->value; }
  const std::string& var_name() const { return node_->name; }
  int pow_exponent() const { return node_->exponent; }
  Expr child_a() const { return Expr(node_->a); }
  Expr child_b() const { return Expr(node_->b); }

  const std::shared_ptr<const detail::ExprNode>& node() const { return node_; }

  // -- construction with constant folding and 0/1 elimination --------------

  static Expr add(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant())
      return constant(a.constant_value() + b.constant_value());
    if (a.is_constant(0.0)) return b;
    if (b.is_constant(0.0)) return a;
    return binary(ExprOp::kAdd, a, b);
  }
  static Expr sub(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant())
      return constant(a.constant_value() - b.constant_value());
    if (b.is_constant(0.0)) return a;
    if (a.is_constant(0.0)) return neg(b);
    if (a.op() == ExprOp::kVar && b.op() == ExprOp::kVar &&
        a.var_name() == b.var_name())
      return constant(0.0);
    return binary(ExprOp::kSub, a, b);
  }
  static Expr mul(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant())
      return constant(a.constant_value() * b.constant_value());
    if (a.is_constant(0.0) || b.is_constant(0.0)) return constant(0.0);
    if (a.is_constant(1.0)) return b;
    if (b.is_constant(1.0)) return a;
    return binary(ExprOp::kMul, a, b);
  }
  static Expr div(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant() && b.constant_value() != 0.0)
      return constant(a.constant_value() / b.constant_value());
    if (a.is_constant(0.0) && !b.is_constant(0.0)) return constant(0.0);
    if (b.is_constant(1.0)) return a;
    return binary(ExprOp::kDiv, a, b);
  }
  static Expr neg(const Expr& a) {
    if (a.is_constant()) return constant(-a.constant_value());
    if (a.op() == ExprOp::kNeg) return a.child_a();
    return unary(ExprOp::kNeg, a);
  }
  static Expr sin(const Expr& a) {
    if (a.is_constant()) return constant(std::sin(a.constant_value()));
    return unary(ExprOp::kSin, a);
  }
  static Expr cos(const Expr& a) {
    if (a.is_constant()) return constant(std::cos(a.constant_value()));
    return unary(ExprOp::kCos, a);
  }
  static Expr exp(const Expr& a) {
    if (a.is_constant()) return constant(std::exp(a.constant_value()));
    return unary(ExprOp::kExp, a);
  }
  static Expr ln(const Expr& a) {
    if (a.is_constant() && a.constant_value() > 0.0)
      return constant(std::log(a.constant_value()));
    return unary(ExprOp::kLn, a);
  }
  static Expr sqrt(const Expr& a) {
    if (a.is_constant() && a.constant_value() >= 0.0)
      return constant(std::sqrt(a.constant_value()));
    return unary(ExprOp::kSqrt, a);
  }
  static Expr pow(const Expr& a, int k) {
    if (k < 0) throw ExprError("pow exponent must be a non-negative integer");
    if (k == 0) return constant(1.0);
    if (k == 1) return a;
    if (a.is_constant()) return constant(std::pow(a.constant_value(), k));
    auto n = std::make_shared<detail::ExprNode>();
    n->op = ExprOp::kPow;
    n->a = a.node_;
    n->exponent = k;
    return Expr(std::move(n));
  }

  friend Expr operator+(const Expr& a, const Expr& b) { return add(a, b); }
  friend Expr operator-(const Expr& a, const Expr& b) { return sub(a, b); }
  friend Expr operator*(const Expr& a, const Expr& b) { return mul(a, b); }
  friend Expr operator/(const Expr& a, const Expr& b) { return div(a, b); }
  friend Expr operator-(const Expr& a) { return neg(a); }

 private:
  explicit Expr(std::shared_ptr<const detail::ExprNode> n)
      : node_(std::move(n)) {}

  static std::shared_ptr<const detail::ExprNode> constant_node(double v) {
    auto n = std::make_shared<detail::ExprNode>();
    n->op = ExprOp::kConst;
    n->value = v;
    return n;
  }
  static Expr unary(ExprOp op, const Expr& a) {
    auto n = std::make_shared<detail::ExprNode>();
    n->op = op;
    n->a = a.node_;
    return Expr(std::move(n));
  }
  static Expr binary(ExprOp op, const Expr& a, const Expr& b) {
    auto n = std::make_shared<detail::ExprNode>();
    n->op = op;
    n->a = a.node_;
    n->b = b.node_;
    return Expr(std::move(n));
  }

  std::shared_ptr<const detail::ExprNode> node_;
};

// ---------------------------------------------------------------------------
// Printing

namespace detail {

// Precedence used for minimal parenthesization: higher binds tighter.
inline int precedence(ExprOp op) {
  switch (op) {
    case ExprOp::kAdd:
    case ExprOp::kSub:
      return 1;
    case ExprOp::kMul:
    case ExprOp::kDiv:
      return 2;
    case ExprOp::kNeg:
      return 3;
    case ExprOp::kPow:
      return 4;
    default:
      return 5;
  }
}

inline void print_double(std::ostream& os, double v) {
  if (v == static_cast<long long>(v) && std::abs(v) < 1e15) {
    os << static_cast<long long>(v);
  } else {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << buf;
  }
}

inline void print_rec(std::ostream& os, const Expr& e, int parent_prec) {
  const int prec = precedence(e.op());
  const bool parens = prec < parent_prec;
  if (parens) os << "(";
  switch (e.op()) {
    case ExprOp::kConst: {
      double v = e.constant_value();
      if (v < 0.0) {
        os << "-";
        print_double(os, -v);
      } else {
        print_double(os, v);
      }
      break;
    }
    case ExprOp::kVar:
      os << e.var_name();
      break;
    case ExprOp::kNeg:
      os << "-";
      print_rec(os, e.child_a(), prec + 1);
      break;
    case ExprOp::kSin:
    case ExprOp::kCos:
    case ExprOp::kExp:
    case ExprOp::kLn:
    case ExprOp::kSqrt: {
      const char* name = e.op() == ExprOp::kSin   ? "sin"
                         : e.op() == ExprOp::kCos ? "cos"
                         : e.op() == ExprOp::kExp ? "exp"
                         : e.op() == ExprOp::kLn  ? "ln"
                                                  : "sqrt";
      os << name << "(";
      print_rec(os, e.child_a(), 0);
      os << ")";
      break;
    }
    case ExprOp::kAdd:
      print_rec(os, e.child_a(), prec);
      os << " + ";
      print_rec(os, e.child_b(), prec + 1);
      break;
    case ExprOp::kSub:
      print_rec(os, e.child_a(), prec);
      os << " - ";
      print_rec(os, e.child_b(), prec + 1);
      break;
    case ExprOp::kMul:
      print_rec(os, e.child_a(), prec);
      os << "*";
      print_rec(os, e.child_b(), prec + 1);
      break;
    case ExprOp::kDiv:
      print_rec(os, e.child_a(), prec);
      os << "/";
      print_rec(os, e.child_b(), prec + 1);
      break;
    case ExprOp::kPow:
      print_rec(os, e.child_a(), prec + 1);
      os << "^" << e.pow_exponent();
      break;
  }
  if (parens) os << ")";
}

}  // namespace detail

inline std::string to_string(const Expr& e) {
  std::ostringstream os;
  detail::print_rec(os, e, 0);
  return os.str();
}

// ---------------------------------------------------------------------------
// Evaluation

namespace detail {
inline double eval_rec(const Expr& e,
                       const std::map<std::string, double>& bindings) {
  switch (e.op()) {
    case ExprOp::kConst:
      return e.constant_value();
    case ExprOp::kVar: {
      auto it = bindings.find(e.var_name());
      if (it == bindings.end())
        throw DomainError("unbound variable", e.var_name());
      return it->second;
    }
    case ExprOp::kNeg:
      return -eval_rec(e.child_a(), bindings);
    case ExprOp::kSin:
      return std::sin(eval_rec(e.child_a(), bindings));
    case ExprOp::kCos:
      return std::cos(eval_rec(e.child_a(), bindings));
    case ExprOp::kExp:
      return std::exp(eval_rec(e.child_a(), bindings));
    case ExprOp::kLn: {
      double v = eval_rec(e.child_a(), bindings);
      if (v <= 0.0) throw DomainError("ln of non-positive value", to_string(e));
      return std::log(v);
    }
    case ExprOp::kSqrt: {
      double v = eval_rec(e.child_a(), bindings);
      if (v < 0.0) throw DomainError("sqrt of negative value", to_string(e));
      return std::sqrt(v);
    }
    case ExprOp::kAdd:
      return eval_rec(e.child_a(), bindings) + eval_rec(e.child_b(), bindings);
    case ExprOp::kSub:
      return eval_rec(e.child_a(), bindings) - eval_rec(e.child_b(), bindings);
    case ExprOp::kMul:
      return eval_rec(e.child_a(), bindings) * eval_rec(e.child_b(), bindings);
    case ExprOp::kDiv: {
      double num = eval_rec(e.child_a(), bindings);
      double den = eval_rec(e.child_b(), bindings);
      if (den == 0.0) throw DomainError("division by zero", to_string(e));
      return num / den;
    }
    case ExprOp::kPow: {
      double base = eval_rec(e.child_a(), bindings);
      double r = 1.0;
      for (int i = 0; i < e.pow_exponent(); ++i) r *= base;
      return r;
    }
  }
  throw ExprError("corrupt expression node");
}
}  // namespace detail

/// IEEE double evaluation with all variables bound by name.
inline double eval(const Expr& e, const std::map<std::string, double>& bindings) {
  return detail::eval_rec(e, bindings);
}

// ---------------------------------------------------------------------------
// Differentiation

/// Exact symbolic derivative d e / d var. Result is simplified only by
/// constant folding and 0/1 elimination.
inline Expr diff(const Expr& e, const std::string& var) {
  switch (e.op()) {
    case ExprOp::kConst:
      return Expr::constant(0.0);
    case ExprOp::kVar:
      return Expr::constant(e.var_name() == var ? 1.0 : 0.0);
    case ExprOp::kNeg:
      return Expr::neg(diff(e.child_a(), var));
    case ExprOp::kSin:
      return Expr::mul(Expr::cos(e.child_a()), diff(e.child_a(), var));
    case ExprOp::kCos:
      return Expr::neg(
          Expr::mul(Expr::sin(e.child_a()), diff(e.child_a(), var)));
    case ExprOp::kExp:
      return Expr::mul(Expr::exp(e.child_a()), diff(e.child_a(), var));
    case ExprOp::kLn:
      return Expr::div(diff(e.child_a(), var), e.child_a());
    case ExprOp::kSqrt:
      return Expr::div(diff(e.child_a(), var),
                       Expr::mul(Expr::constant(2.0), Expr::sqrt(e.child_a())));
    case ExprOp::kAdd:
      return Expr::add(diff(e.child_a(), var), diff(e.child_b(), var));
    case ExprOp::kSub:
      return Expr::sub(diff(e.child_a(), var), diff(e.child_b(), var));
    case ExprOp::kMul:
      return Expr::add(Expr::mul(diff(e.child_a(), var), e.child_b()),
                       Expr::mul(e.child_a(), diff(e.child_b(), var)));
    case ExprOp::kDiv:
      // (a/b)' = a'/b - a b' / b^2
      return Expr::sub(
          Expr::div(diff(e.child_a(), var), e.child_b()),
          Expr::div(Expr::mul(e.child_a(), diff(e.child_b(), var)),
                    Expr::pow(e.child_b(), 2)));
    case ExprOp::kPow: {
      const int k = e.pow_exponent();
      return Expr::mul(
          Expr::mul(Expr::constant(static_cast<double>(k)),
                    Expr::pow(e.child_a(), k - 1)),
          diff(e.child_a(), var));
    }
  }
  throw ExprError("corrupt expression node");
}

/// Replace variables by expressions. Variables absent from `repl` are kept.
inline Expr substitute(const Expr& e, const std::map<std::string, Expr>& repl) {
  switch (e.op()) {
    case ExprOp::kConst:
      return e;
    case ExprOp::kVar: {
      auto it = repl.find(e.var_name());
      return it == repl.end() ? e : it->second;
    }
    case ExprOp::kNeg:
      return Expr::neg(substitute(e.child_a(), repl));
    case ExprOp::kSin:
      return Expr::sin(substitute(e.child_a(), repl));
    case ExprOp::kCos:
      return Expr::cos(substitute(e.child_a(), repl));
    case ExprOp::kExp:
      return Expr::exp(substitute(e.child_a(), repl));
    case ExprOp::kLn:
      return Expr::ln(substitute(e.child_a(), repl));
    case ExprOp::kSqrt:
      return Expr::sqrt(substitute(e.child_a(), repl));
    case ExprOp::kAdd:
      return Expr::add(substitute(e.child_a(), repl),
                       substitute(e.child_b(), repl));
    case ExprOp::kSub:
      return Expr::sub(substitute(e.child_a(), repl),
                       substitute(e.child_b(), repl));
    case ExprOp::kMul:
      return Expr::mul(substitute(e.child_a(), repl),
                       substitute(e.child_b(), repl));
    case ExprOp::kDiv:
      return Expr::div(substitute(e.child_a(), repl),
                       substitute(e.child_b(), repl));
    case ExprOp::kPow:
      return Expr::pow(substitute(e.child_a(), repl), e.pow_exponent());
  }
  throw ExprError("corrupt expression node");
}

inline void collect_variables(const Expr& e, std::set<std::string>* out) {
  switch (e.op()) {
    case ExprOp::kConst:
      return;
    case ExprOp::kVar:
      out->insert(e.var_name());
      return;
    case ExprOp::kAdd:
    case ExprOp::kSub:
    case ExprOp::kMul:
    case ExprOp::kDiv:
      collect_variables(e.child_a(), out);
      collect_variables(e.child_b(), out);
      return;
    default:
      collect_variables(e.child_a(), out);
      return;
  }
}

/// True when `e` does not reference `var` (after simplification).
inline bool depends_on(const Expr& e, const std::string& var) {
  std::set<std::string> vars;
  collect_variables(e, &vars);
  return vars.count(var) > 0;
}

// ---------------------------------------------------------------------------
// Parser

namespace detail {

class Parser {
 public:
  Parser(const std::string& text, const std::set<std::string>& env)
      : text_(text), env_(env) {}

  Expr parse() {
    Expr e = parse_sum();
    skip_ws();
    if (pos_ != text_.size())
      throw ParseError("unexpected trailing input", pos_);
    return e;
  }

 private:
  // sum  := term (('+'|'-') term)*          left-associative
  // term := factor (('*'|'/') factor)*      left-associative
  // factor := '-' factor | power
  // power := atom ('^' integer)*
  // atom := number | ident | ident '(' sum ')' | '(' sum ')'
  Expr parse_sum() {
    Expr e = parse_term();
    for (;;) {
      skip_ws();
      if (accept('+')) {
        e = Expr::add(e, parse_term());
      } else if (accept('-')) {
        e = Expr::sub(e, parse_term());
      } else {
        return e;
      }
    }
  }

  Expr parse_term() {
    Expr e = parse_factor();
    for (;;) {
      skip_ws();
      if (accept('*')) {
        e = Expr::mul(e, parse_factor());
      } else if (accept('/')) {
        e = Expr::div(e, parse_factor());
      } else {
        return e;
      }
    }
  }

  Expr parse_factor() {
    skip_ws();
    if (accept('-')) return Expr::neg(parse_factor());
    return parse_power();
  }

  Expr parse_power() {
    Expr e = parse_atom();
    for (;;) {
      skip_ws();
      if (!accept('^')) return e;
      skip_ws();
      const std::size_t start = pos_;
      if (pos_ >= text_.size() || !std::isdigit(text_[pos_]))
        throw ParseError("expected non-negative integer exponent", pos_);
      int k = 0;
      while (pos_ < text_.size() && std::isdigit(text_[pos_])) {
        k = k * 10 + (text_[pos_] - '0');
        if (k > 1000) throw ParseError("exponent too large", start);
        ++pos_;
      }
      e = Expr::pow(e, k);
    }
  }

  Expr parse_atom() {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("unexpected end of input", pos_);
    const char c = text_[pos_];
    if (std::isdigit(c) || c == '.') return parse_number();
    if (std::isalpha(c) || c == '_') return parse_ident();
    if (accept('(')) {
      Expr e = parse_sum();
      skip_ws();
      if (!accept(')')) throw ParseError("expected ')'", pos_);
      return e;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", pos_);
  }

  Expr parse_number() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isdigit(text_[pos_]) || text_[pos_] == '.' ||
            text_[pos_] == 'e' || text_[pos_] == 'E' ||
            ((text_[pos_] == '+' || text_[pos_] == '-') && pos_ > start &&
             (text_[pos_ - 1] == 'e' || text_[pos_ - 1] == 'E')))) {
      ++pos_;
    }
    try {
      std::size_t used = 0;
      double v = std::stod(text_.substr(start, pos_ - start), &used);
      if (used != pos_ - start) throw std::invalid_argument("partial");
      return Expr::constant(v);
    } catch (const std::exception&) {
      throw ParseError("malformed number", start);
    }
  }

  Expr parse_ident() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(text_[pos_]) || text_[pos_] == '_'))
      ++pos_;
    const std::string name = text_.substr(start, pos_ - start);
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == '(') {
      ++pos_;
      Expr arg = parse_sum();
      skip_ws();
      if (!accept(')')) throw ParseError("expected ')'", pos_);
      if (name == "sin") return Expr::sin(arg);
      if (name == "cos") return Expr::cos(arg);
      if (name == "exp") return Expr::exp(arg);
      if (name == "ln" || name == "log") return Expr::ln(arg);
      if (name == "sqrt") return Expr::sqrt(arg);
      throw ParseError("unknown function '" + name + "'", start);
    }
    if (env_.count(name) == 0)
      throw ParseError("unknown identifier '" + name + "'", start);
    return Expr::variable(name);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(text_[pos_])) ++pos_;
  }
  bool accept(char c) {
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  const std::string& text_;
  const std::set<std::string>& env_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parse a single arithmetic expression over `env`'s variable names.
inline Expr parse(const std::string& text, const std::set<std::string>& env) {
  return detail::Parser(text, env).parse();
}

// ---------------------------------------------------------------------------
// Compiled evaluation
//
// Hot loops (path integration, closed-loop simulation) evaluate the same
// expressions millions of times; a flat postfix tape indexed into a slot
// vector avoids per-node map lookups.

class CompiledExpr {
 public:
  CompiledExpr() = default;

  CompiledExpr(const Expr& e, const std::vector<std::string>& slot_names) {
    std::map<std::string, int> slots;
    for (std::size_t i = 0; i < slot_names.size(); ++i)
      slots[slot_names[i]] = static_cast<int>(i);
    depth_ = emit(e, slots);
  }

  /// Evaluate against a slot vector laid out as given at compile time.
  double eval(const double* slots) const {
    double stack[kMaxDepth];
    int top = -1;
    for (const Instr& in : code_) {
      switch (in.op) {
        case ExprOp::kConst:
          stack[++top] = in.imm;
          break;
        case ExprOp::kVar:
          stack[++top] = slots[in.slot];
          break;
        case ExprOp::kNeg:
          stack[top] = -stack[top];
          break;
        case ExprOp::kSin:
          stack[top] = std::sin(stack[top]);
          break;
        case ExprOp::kCos:
          stack[top] = std::cos(stack[top]);
          break;
        case ExprOp::kExp:
          stack[top] = std::exp(stack[top]);
          break;
        case ExprOp::kLn:
          stack[top] = std::log(stack[top]);
          break;
        case ExprOp::kSqrt:
          stack[top] = std::sqrt(stack[top]);
          break;
        case ExprOp::kAdd:
          --top;
          stack[top] += stack[top + 1];
          break;
        case ExprOp::kSub:
          --top;
          stack[top] -= stack[top + 1];
          break;
        case ExprOp::kMul:
          --top;
          stack[top] *= stack[top + 1];
          break;
        case ExprOp::kDiv:
          --top;
          stack[top] /= stack[top + 1];
          break;
        case ExprOp::kPow: {
          double base = stack[top];
          double r = 1.0;
          for (int i = 0; i < in.slot; ++i) r *= base;
          stack[top] = r;
          break;
        }
      }
    }
    return stack[0];
  }

 private:
  static constexpr int kMaxDepth = 128;

  struct Instr {
    ExprOp op;
    int slot = 0;  // variable slot, or pow exponent
    double imm = 0.0;
  };

  int emit(const Expr& e, const std::map<std::string, int>& slots) {
    switch (e.op()) {
      case ExprOp::kConst:
        code_.push_back({ExprOp::kConst, 0, e.constant_value()});
        return 1;
      case ExprOp::kVar: {
        auto it = slots.find(e.var_name());
        if (it == slots.end())
          throw ExprError("variable '" + e.var_name() +
                          "' not in compile-time slot list");
        code_.push_back({ExprOp::kVar, it->second, 0.0});
        return 1;
      }
      case ExprOp::kAdd:
      case ExprOp::kSub:
      case ExprOp::kMul:
      case ExprOp::kDiv: {
        int da = emit(e.child_a(), slots);
        int db = emit(e.child_b(), slots);
        code_.push_back({e.op(), 0, 0.0});
        int d = std::max(da, 1 + db);
        if (d > kMaxDepth) throw ExprError("expression too deep to compile");
        return d;
      }
      case ExprOp::kPow: {
        int d = emit(e.child_a(), slots);
        code_.push_back({ExprOp::kPow, e.pow_exponent(), 0.0});
        return d;
      }
      default: {  // unary
        int d = emit(e.child_a(), slots);
        code_.push_back({e.op(), 0, 0.0});
        return d;
      }
    }
  }

  std::vector<Instr> code_;
  int depth_ = 0;
};

}  // namespace vccm
