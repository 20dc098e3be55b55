#include "phkit/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <unordered_map>

namespace phkit {
namespace {

using Kind = Expr::Kind;
using NodePtr = Expr::NodePtr;
using VarList = std::shared_ptr<const std::vector<std::string>>;

const std::unordered_map<std::string_view, Kind>& function_table() {
  static const std::unordered_map<std::string_view, Kind> table = {
      {"sin", Kind::kSin}, {"cos", Kind::kCos},  {"exp", Kind::kExp},
      {"ln", Kind::kLn},   {"sqrt", Kind::kSqrt},
  };
  return table;
}

const char* function_name(Kind kind) {
  switch (kind) {
    case Kind::kSin: return "sin";
    case Kind::kCos: return "cos";
    case Kind::kExp: return "exp";
    case Kind::kLn: return "ln";
    case Kind::kSqrt: return "sqrt";
    default: return "?";
  }
}

char operator_symbol(Kind kind) {
  switch (kind) {
    case Kind::kAdd: return '+';
    case Kind::kSub: return '-';
    case Kind::kMul: return '*';
    case Kind::kDiv: return '/';
    default: return '?';
  }
}

bool is_binary(Kind kind) {
  return kind == Kind::kAdd || kind == Kind::kSub || kind == Kind::kMul ||
         kind == Kind::kDiv;
}

NodePtr make_leaf_number(double v) {
  auto n = std::make_shared<Expr::Node>();
  n->kind = Kind::kNumber;
  n->number = v;
  return n;
}

NodePtr make_unary(Kind kind, NodePtr arg) {
  auto n = std::make_shared<Expr::Node>();
  n->kind = kind;
  n->lhs = std::move(arg);
  return n;
}

// Negative constants are represented as Neg(Number) so printing round-trips.
NodePtr make_number(double v) {
  if (v < 0.0) return make_unary(Kind::kNeg, make_leaf_number(-v));
  return make_leaf_number(v == 0.0 ? 0.0 : v);
}

NodePtr make_variable(int index) {
  auto n = std::make_shared<Expr::Node>();
  n->kind = Kind::kVariable;
  n->index = index;
  return n;
}

NodePtr make_binary(Kind kind, NodePtr a, NodePtr b) {
  auto n = std::make_shared<Expr::Node>();
  n->kind = kind;
  n->lhs = std::move(a);
  n->rhs = std::move(b);
  return n;
}

NodePtr make_pow(NodePtr base, int exponent) {
  auto n = std::make_shared<Expr::Node>();
  n->kind = Kind::kPow;
  n->lhs = std::move(base);
  n->exponent = exponent;
  return n;
}

// Value of a variable-free subtree, if it is one.
std::optional<double> constant_value(const NodePtr& n) {
  if (n->kind == Kind::kNumber) return n->number;
  if (n->kind == Kind::kNeg && n->lhs->kind == Kind::kNumber) return -n->lhs->number;
  return std::nullopt;
}

bool is_zero_node(const NodePtr& n) {
  auto c = constant_value(n);
  return c && *c == 0.0;
}

bool is_one_node(const NodePtr& n) {
  auto c = constant_value(n);
  return c && *c == 1.0;
}

NodePtr fold_add(NodePtr a, NodePtr b) {
  auto ca = constant_value(a), cb = constant_value(b);
  if (ca && cb) return make_number(*ca + *cb);
  if (ca && *ca == 0.0) return b;
  if (cb && *cb == 0.0) return a;
  return make_binary(Kind::kAdd, std::move(a), std::move(b));
}

NodePtr fold_neg(NodePtr a) {
  if (auto c = constant_value(a)) return make_number(-*c);
  if (a->kind == Kind::kNeg) return a->lhs;
  return make_unary(Kind::kNeg, std::move(a));
}

NodePtr fold_sub(NodePtr a, NodePtr b) {
  auto ca = constant_value(a), cb = constant_value(b);
  if (ca && cb) return make_number(*ca - *cb);
  if (cb && *cb == 0.0) return a;
  if (ca && *ca == 0.0) return fold_neg(std::move(b));
  return make_binary(Kind::kSub, std::move(a), std::move(b));
}

NodePtr fold_mul(NodePtr a, NodePtr b) {
  auto ca = constant_value(a), cb = constant_value(b);
  if (ca && cb) return make_number(*ca * *cb);
  if ((ca && *ca == 0.0) || (cb && *cb == 0.0)) return make_number(0.0);
  if (ca && *ca == 1.0) return b;
  if (cb && *cb == 1.0) return a;
  if (ca && *ca == -1.0) return fold_neg(std::move(b));
  if (cb && *cb == -1.0) return fold_neg(std::move(a));
  return make_binary(Kind::kMul, std::move(a), std::move(b));
}

NodePtr fold_div(NodePtr a, NodePtr b) {
  if (is_zero_node(a)) return make_number(0.0);
  if (is_one_node(b)) return a;
  return make_binary(Kind::kDiv, std::move(a), std::move(b));
}

NodePtr fold_pow(NodePtr base, int exponent) {
  if (exponent == 0) return make_number(1.0);
  if (exponent == 1) return base;
  if (auto c = constant_value(base)) return make_number(std::pow(*c, exponent));
  return make_pow(std::move(base), exponent);
}

bool uses_variables(const NodePtr& n) {
  if (!n) return false;
  if (n->kind == Kind::kVariable) return true;
  return uses_variables(n->lhs) || uses_variables(n->rhs);
}

// ---------------------------------------------------------------------------
// Lexer / parser

struct Token {
  enum class Type { kNumber, kIdent, kOp, kLParen, kRParen, kEnd };
  Type type;
  std::size_t pos;
  std::string text;
  double number = 0.0;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      while (i_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[i_]))) ++i_;
      if (i_ >= src_.size()) {
        out.push_back({Token::Type::kEnd, i_, "", 0.0});
        return out;
      }
      const char c = src_[i_];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        out.push_back(number());
      } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        const std::size_t start = i_;
        while (i_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[i_])) ||
                                    src_[i_] == '_'))
          ++i_;
        out.push_back({Token::Type::kIdent, start, std::string(src_.substr(start, i_ - start))});
      } else if (c == '+' || c == '-' || c == '*' || c == '/' || c == '^') {
        out.push_back({Token::Type::kOp, i_, std::string(1, c)});
        ++i_;
      } else if (c == '(') {
        out.push_back({Token::Type::kLParen, i_, "("});
        ++i_;
      } else if (c == ')') {
        out.push_back({Token::Type::kRParen, i_, ")"});
        ++i_;
      } else {
        throw ParseError(std::string("unexpected character '") + c + "'", i_);
      }
    }
  }

 private:
  Token number() {
    const std::size_t start = i_;
    bool digits = false;
    while (i_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_]))) {
      ++i_;
      digits = true;
    }
    if (i_ < src_.size() && src_[i_] == '.') {
      ++i_;
      while (i_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_]))) {
        ++i_;
        digits = true;
      }
    }
    if (!digits) throw ParseError("malformed number", start);
    if (i_ < src_.size() && (src_[i_] == 'e' || src_[i_] == 'E')) {
      std::size_t j = i_ + 1;
      if (j < src_.size() && (src_[j] == '+' || src_[j] == '-')) ++j;
      if (j < src_.size() && std::isdigit(static_cast<unsigned char>(src_[j]))) {
        while (j < src_.size() && std::isdigit(static_cast<unsigned char>(src_[j]))) ++j;
        i_ = j;
      }
    }
    const std::string text(src_.substr(start, i_ - start));
    Token t{Token::Type::kNumber, start, text};
    t.number = std::strtod(text.c_str(), nullptr);
    if (!std::isfinite(t.number)) throw ParseError("number out of range", start);
    return t;
  }

  std::string_view src_;
  std::size_t i_ = 0;
};

double eval_constant(const NodePtr& n);

class Parser {
 public:
  Parser(std::vector<Token> tokens, const std::vector<std::string>& vars)
      : tokens_(std::move(tokens)), vars_(vars) {}

  NodePtr run() {
    NodePtr e = expression();
    if (peek().type != Token::Type::kEnd) throw ParseError("unexpected token", peek().pos);
    return e;
  }

 private:
  const Token& peek() const { return tokens_[k_]; }
  const Token& next() { return tokens_[k_++]; }
  bool at_op(char op) const {
    return peek().type == Token::Type::kOp && peek().text[0] == op;
  }

  NodePtr expression() {
    NodePtr lhs = term();
    while (at_op('+') || at_op('-')) {
      const Kind kind = next().text[0] == '+' ? Kind::kAdd : Kind::kSub;
      lhs = make_binary(kind, lhs, term());
    }
    return lhs;
  }

  NodePtr term() {
    NodePtr lhs = unary();
    while (at_op('*') || at_op('/')) {
      const Kind kind = next().text[0] == '*' ? Kind::kMul : Kind::kDiv;
      lhs = make_binary(kind, lhs, unary());
    }
    return lhs;
  }

  NodePtr unary() {
    if (at_op('-')) {
      next();
      return make_unary(Kind::kNeg, unary());
    }
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    if (at_op('^')) {
      next();
      const std::size_t pos = peek().pos;
      NodePtr exponent = unary();
      if (uses_variables(exponent)) throw ParseError("exponent must be a constant integer", pos);
      const double value = eval_constant(exponent);
      if (!std::isfinite(value) || value != std::round(value) || std::abs(value) > 1024.0)
        throw ParseError("exponent must be a constant integer", pos);
      return make_pow(base, static_cast<int>(value));
    }
    return base;
  }

  NodePtr primary() {
    const Token& t = peek();
    switch (t.type) {
      case Token::Type::kNumber:
        next();
        return make_leaf_number(t.number);
      case Token::Type::kIdent: {
        next();
        auto fn = function_table().find(t.text);
        if (fn != function_table().end()) {
          if (peek().type != Token::Type::kLParen)
            throw ParseError("expected '(' after " + t.text, peek().pos);
          next();
          NodePtr arg = expression();
          if (peek().type != Token::Type::kRParen) throw ParseError("expected ')'", peek().pos);
          next();
          return make_unary(fn->second, arg);
        }
        for (std::size_t i = 0; i < vars_.size(); ++i)
          if (vars_[i] == t.text) return make_variable(static_cast<int>(i));
        throw UndeclaredVariableError(t.text);
      }
      case Token::Type::kLParen: {
        next();
        NodePtr e = expression();
        if (peek().type != Token::Type::kRParen) throw ParseError("expected ')'", peek().pos);
        next();
        return e;
      }
      case Token::Type::kEnd:
        throw ParseError("unexpected end of input", t.pos);
      default:
        throw ParseError("unexpected token '" + t.text + "'", t.pos);
    }
  }

  std::vector<Token> tokens_;
  std::size_t k_ = 0;
  const std::vector<std::string>& vars_;
};

// ---------------------------------------------------------------------------
// Evaluation

struct Dual {
  double v;
  Eigen::VectorXd d;
};

[[noreturn]] void domain(const std::string& what) { throw DomainError(what); }

double checked(double v, const char* what) {
  if (!std::isfinite(v)) domain(std::string("non-finite result in ") + what);
  return v;
}

double ipow(double base, int n) {
  if (n < 0 && base == 0.0) domain("zero raised to a negative power");
  return std::pow(base, n);
}

double eval_node(const Expr::Node& n, std::span<const double> x) {
  switch (n.kind) {
    case Kind::kNumber: return n.number;
    case Kind::kVariable: return x[n.index];
    case Kind::kAdd: return checked(eval_node(*n.lhs, x) + eval_node(*n.rhs, x), "+");
    case Kind::kSub: return checked(eval_node(*n.lhs, x) - eval_node(*n.rhs, x), "-");
    case Kind::kMul: return checked(eval_node(*n.lhs, x) * eval_node(*n.rhs, x), "*");
    case Kind::kDiv: {
      const double den = eval_node(*n.rhs, x);
      if (den == 0.0) domain("division by zero");
      return checked(eval_node(*n.lhs, x) / den, "/");
    }
    case Kind::kNeg: return -eval_node(*n.lhs, x);
    case Kind::kPow: return checked(ipow(eval_node(*n.lhs, x), n.exponent), "^");
    case Kind::kSin: return std::sin(eval_node(*n.lhs, x));
    case Kind::kCos: return std::cos(eval_node(*n.lhs, x));
    case Kind::kExp: return checked(std::exp(eval_node(*n.lhs, x)), "exp");
    case Kind::kLn: {
      const double a = eval_node(*n.lhs, x);
      if (a <= 0.0) domain("ln of non-positive value " + format_number(a));
      return std::log(a);
    }
    case Kind::kSqrt: {
      const double a = eval_node(*n.lhs, x);
      if (a < 0.0) domain("sqrt of negative value " + format_number(a));
      return std::sqrt(a);
    }
  }
  domain("unknown node");
}

Dual eval_dual(const Expr::Node& n, std::span<const double> x) {
  const Eigen::Index dim = static_cast<Eigen::Index>(x.size());
  switch (n.kind) {
    case Kind::kNumber: return {n.number, Eigen::VectorXd::Zero(dim)};
    case Kind::kVariable: {
      Dual r{x[n.index], Eigen::VectorXd::Zero(dim)};
      r.d[n.index] = 1.0;
      return r;
    }
    case Kind::kAdd: {
      Dual a = eval_dual(*n.lhs, x), b = eval_dual(*n.rhs, x);
      return {checked(a.v + b.v, "+"), a.d + b.d};
    }
    case Kind::kSub: {
      Dual a = eval_dual(*n.lhs, x), b = eval_dual(*n.rhs, x);
      return {checked(a.v - b.v, "-"), a.d - b.d};
    }
    case Kind::kMul: {
      Dual a = eval_dual(*n.lhs, x), b = eval_dual(*n.rhs, x);
      return {checked(a.v * b.v, "*"), b.v * a.d + a.v * b.d};
    }
    case Kind::kDiv: {
      Dual a = eval_dual(*n.lhs, x), b = eval_dual(*n.rhs, x);
      if (b.v == 0.0) domain("division by zero");
      const double q = checked(a.v / b.v, "/");
      return {q, (a.d - q * b.d) / b.v};
    }
    case Kind::kNeg: {
      Dual a = eval_dual(*n.lhs, x);
      return {-a.v, -a.d};
    }
    case Kind::kPow: {
      Dual a = eval_dual(*n.lhs, x);
      const double v = checked(ipow(a.v, n.exponent), "^");
      const double dv = n.exponent * ipow(a.v, n.exponent - 1);
      return {v, dv * a.d};
    }
    case Kind::kSin: {
      Dual a = eval_dual(*n.lhs, x);
      return {std::sin(a.v), std::cos(a.v) * a.d};
    }
    case Kind::kCos: {
      Dual a = eval_dual(*n.lhs, x);
      return {std::cos(a.v), -std::sin(a.v) * a.d};
    }
    case Kind::kExp: {
      Dual a = eval_dual(*n.lhs, x);
      const double v = checked(std::exp(a.v), "exp");
      return {v, v * a.d};
    }
    case Kind::kLn: {
      Dual a = eval_dual(*n.lhs, x);
      if (a.v <= 0.0) domain("ln of non-positive value " + format_number(a.v));
      return {std::log(a.v), a.d / a.v};
    }
    case Kind::kSqrt: {
      Dual a = eval_dual(*n.lhs, x);
      if (a.v < 0.0) domain("sqrt of negative value " + format_number(a.v));
      const double v = std::sqrt(a.v);
      if (v == 0.0 && !a.d.isZero()) domain("sqrt is not differentiable at 0");
      return {v, v == 0.0 ? Eigen::VectorXd(a.d) : Eigen::VectorXd(a.d / (2.0 * v))};
    }
  }
  domain("unknown node");
}

double eval_constant(const NodePtr& n) {
  return eval_node(*n, std::span<const double>());
}

// ---------------------------------------------------------------------------
// Printing

void print(const Expr::Node& n, const std::vector<std::string>& vars, std::string& out) {
  switch (n.kind) {
    case Kind::kNumber: out += format_number(n.number); return;
    case Kind::kVariable: out += vars[n.index]; return;
    case Kind::kNeg:
      out += "(-";
      print(*n.lhs, vars, out);
      out += ")";
      return;
    case Kind::kPow:
      out += "(";
      print(*n.lhs, vars, out);
      out += " ^ ";
      if (n.exponent < 0) out += "-";
      out += std::to_string(std::abs(n.exponent));
      out += ")";
      return;
    default: break;
  }
  if (is_binary(n.kind)) {
    out += "(";
    print(*n.lhs, vars, out);
    out += ' ';
    out += operator_symbol(n.kind);
    out += ' ';
    print(*n.rhs, vars, out);
    out += ")";
    return;
  }
  out += function_name(n.kind);
  out += "(";
  print(*n.lhs, vars, out);
  out += ")";
}

bool nodes_equal(const NodePtr& a, const NodePtr& b) {
  if (!a || !b) return !a && !b;
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case Kind::kNumber: return a->number == b->number;
    case Kind::kVariable: return a->index == b->index;
    case Kind::kPow: return a->exponent == b->exponent && nodes_equal(a->lhs, b->lhs);
    default: return nodes_equal(a->lhs, b->lhs) && nodes_equal(a->rhs, b->rhs);
  }
}

NodePtr remap(const NodePtr& n, const std::vector<int>& index_map) {
  if (!n) return n;
  if (n->kind == Kind::kVariable) return make_variable(index_map[n->index]);
  if (n->kind == Kind::kNumber) return n;
  auto copy = std::make_shared<Expr::Node>(*n);
  copy->lhs = remap(n->lhs, index_map);
  copy->rhs = remap(n->rhs, index_map);
  return copy;
}

NodePtr substitute_node(const NodePtr& n, const std::vector<NodePtr>& repl) {
  if (!n) return n;
  if (n->kind == Kind::kVariable) return repl[n->index];
  if (n->kind == Kind::kNumber) return n;
  auto copy = std::make_shared<Expr::Node>(*n);
  copy->lhs = substitute_node(n->lhs, repl);
  copy->rhs = substitute_node(n->rhs, repl);
  return copy;
}

NodePtr differentiate(const NodePtr& n, int var) {
  switch (n->kind) {
    case Kind::kNumber: return make_number(0.0);
    case Kind::kVariable: return make_number(n->index == var ? 1.0 : 0.0);
    case Kind::kAdd: return fold_add(differentiate(n->lhs, var), differentiate(n->rhs, var));
    case Kind::kSub: return fold_sub(differentiate(n->lhs, var), differentiate(n->rhs, var));
    case Kind::kMul:
      return fold_add(fold_mul(differentiate(n->lhs, var), n->rhs),
                      fold_mul(n->lhs, differentiate(n->rhs, var)));
    case Kind::kDiv: {
      // (a/b)' = a'/b - a b' / b^2
      NodePtr da = differentiate(n->lhs, var), db = differentiate(n->rhs, var);
      return fold_sub(fold_div(da, n->rhs),
                      fold_div(fold_mul(n->lhs, db), fold_pow(n->rhs, 2)));
    }
    case Kind::kNeg: return fold_neg(differentiate(n->lhs, var));
    case Kind::kPow:
      return fold_mul(fold_mul(make_number(n->exponent), fold_pow(n->lhs, n->exponent - 1)),
                      differentiate(n->lhs, var));
    case Kind::kSin:
      return fold_mul(make_unary(Kind::kCos, n->lhs), differentiate(n->lhs, var));
    case Kind::kCos:
      return fold_neg(fold_mul(make_unary(Kind::kSin, n->lhs), differentiate(n->lhs, var)));
    case Kind::kExp: return fold_mul(n, differentiate(n->lhs, var));
    case Kind::kLn: return fold_div(differentiate(n->lhs, var), n->lhs);
    case Kind::kSqrt:
      return fold_div(differentiate(n->lhs, var), fold_mul(make_number(2.0), n));
  }
  return make_number(0.0);
}

std::vector<double> point_from_map(const std::vector<std::string>& vars,
                                   const std::map<std::string, double>& point) {
  std::vector<double> x(vars.size());
  for (std::size_t i = 0; i < vars.size(); ++i) {
    auto it = point.find(vars[i]);
    if (it == point.end()) throw DimensionError("no value for variable \"" + vars[i] + "\"");
    x[i] = it->second;
  }
  return x;
}

void require_same_variables(const Expr& a, const Expr& b) {
  if (a.variables() != b.variables())
    throw DimensionError("expressions are over different variable lists");
}

}  // namespace

Expr::Expr(std::vector<std::string> variables)
    : root_(make_number(0.0)),
      variables_(std::make_shared<const std::vector<std::string>>(std::move(variables))),
      source_("0") {}

Expr::Expr(NodePtr root, std::shared_ptr<const std::vector<std::string>> variables,
           std::string source)
    : root_(std::move(root)), variables_(std::move(variables)), source_(std::move(source)) {
  if (source_.empty()) source_ = to_string();
}

Expr Expr::parse(std::string_view source, std::vector<std::string> variables) {
  if (source.find_first_not_of(" \t\r\n") == std::string_view::npos)
    throw ParseError("empty expression", 0);
  Parser parser(Lexer(source).run(), variables);
  NodePtr root = parser.run();
  return Expr(std::move(root),
              std::make_shared<const std::vector<std::string>>(std::move(variables)),
              std::string(source));
}

Expr Expr::constant(double value, std::vector<std::string> variables) {
  if (!std::isfinite(value)) throw DomainError("non-finite constant");
  return Expr(make_number(value),
              std::make_shared<const std::vector<std::string>>(std::move(variables)), "");
}

Expr Expr::variable(const std::string& name, std::vector<std::string> variables) {
  for (std::size_t i = 0; i < variables.size(); ++i) {
    if (variables[i] == name)
      return Expr(make_variable(static_cast<int>(i)),
                  std::make_shared<const std::vector<std::string>>(std::move(variables)), "");
  }
  throw UndeclaredVariableError(name);
}

std::string Expr::to_string() const {
  std::string out;
  print(*root_, *variables_, out);
  return out;
}

double Expr::eval(std::span<const double> point) const {
  if (point.size() != variables_->size())
    throw DimensionError("expression expects " + std::to_string(variables_->size()) +
                         " values, got " + std::to_string(point.size()));
  return eval_node(*root_, point);
}

double Expr::eval(const std::map<std::string, double>& point) const {
  const auto x = point_from_map(*variables_, point);
  return eval_node(*root_, x);
}

Expr::ValueGrad Expr::eval_grad(std::span<const double> point) const {
  if (point.size() != variables_->size())
    throw DimensionError("expression expects " + std::to_string(variables_->size()) +
                         " values, got " + std::to_string(point.size()));
  Dual d = eval_dual(*root_, point);
  if (!d.d.allFinite()) domain("non-finite gradient");
  return {d.v, std::move(d.d)};
}

Expr::ValueGrad Expr::eval_grad(const std::map<std::string, double>& point) const {
  const auto x = point_from_map(*variables_, point);
  return eval_grad(std::span<const double>(x));
}

bool Expr::structurally_equal(const Expr& other) const {
  return *variables_ == *other.variables_ && nodes_equal(root_, other.root_);
}

bool Expr::is_constant() const { return !uses_variables(root_); }

bool Expr::is_zero() const { return is_zero_node(root_); }

Expr Expr::rebind(std::vector<std::string> variables) const {
  std::vector<int> index_map(variables_->size(), -1);
  for (std::size_t i = 0; i < variables_->size(); ++i) {
    for (std::size_t j = 0; j < variables.size(); ++j) {
      if ((*variables_)[i] == variables[j]) {
        index_map[i] = static_cast<int>(j);
        break;
      }
    }
  }
  // Only variables that actually occur need a target.
  std::vector<bool> used(variables_->size(), false);
  std::vector<const Node*> stack{root_.get()};
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    if (n->kind == Kind::kVariable) used[n->index] = true;
    if (n->lhs) stack.push_back(n->lhs.get());
    if (n->rhs) stack.push_back(n->rhs.get());
  }
  for (std::size_t i = 0; i < used.size(); ++i)
    if (used[i] && index_map[i] < 0) throw UndeclaredVariableError((*variables_)[i]);
  return Expr(remap(root_, index_map),
              std::make_shared<const std::vector<std::string>>(std::move(variables)), "");
}

Expr Expr::substitute(const std::vector<Expr>& replacements) const {
  if (replacements.size() != variables_->size())
    throw DimensionError("substitute expects " + std::to_string(variables_->size()) +
                         " replacements, got " + std::to_string(replacements.size()));
  std::vector<std::string> target_vars;
  std::vector<NodePtr> nodes;
  for (std::size_t i = 0; i < replacements.size(); ++i) {
    if (i == 0) {
      target_vars = replacements[0].variables();
    } else if (replacements[i].variables() != target_vars) {
      throw DimensionError("replacements are over different variable lists");
    }
    nodes.push_back(replacements[i].root_);
  }
  if (replacements.empty()) return *this;
  return Expr(substitute_node(root_, nodes),
              std::make_shared<const std::vector<std::string>>(std::move(target_vars)), "");
}

Expr Expr::derivative(std::size_t variable) const {
  if (variable >= variables_->size()) throw DimensionError("derivative index out of range");
  return Expr(differentiate(root_, static_cast<int>(variable)), variables_, "");
}

Expr operator+(const Expr& a, const Expr& b) {
  require_same_variables(a, b);
  return Expr(fold_add(a.root_, b.root_), a.variables_, "");
}

Expr operator-(const Expr& a, const Expr& b) {
  require_same_variables(a, b);
  return Expr(fold_sub(a.root_, b.root_), a.variables_, "");
}

Expr operator*(const Expr& a, const Expr& b) {
  require_same_variables(a, b);
  return Expr(fold_mul(a.root_, b.root_), a.variables_, "");
}

Expr operator-(const Expr& a) { return Expr(fold_neg(a.root_), a.variables_, ""); }

Expr parse_expr(std::string_view source, std::vector<std::string> variables) {
  return Expr::parse(source, std::move(variables));
}

double eval(const Expr& e, const std::map<std::string, double>& point) { return e.eval(point); }

Expr::ValueGrad eval_grad(const Expr& e, const std::map<std::string, double>& point) {
  return e.eval_grad(point);
}

bool is_identifier(std::string_view name) {
  if (name.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(name[0])) || name[0] == '_')) return false;
  for (char c : name)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  return function_table().find(name) == function_table().end();
}

std::string format_number(double value) {
  char buf[40];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, value);
    if (std::strtod(buf, nullptr) == value) break;
  }
  return buf;
}

}  // namespace phkit
