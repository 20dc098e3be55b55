#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "phkit/error.hpp"

namespace phkit {

// Scalar expression over an ordered list of named variables.
//
// Grammar (precedence high to low): function call and parentheses, `^`
// (right-associative, constant integer exponent), unary minus, `*` `/`, `+`
// `-`. Functions: sin, cos, exp, ln, sqrt. No implicit multiplication.
//
// Expressions are immutable; copies share the tree.
class Expr {
 public:
  enum class Kind {
    kNumber,
    kVariable,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kNeg,
    kPow,
    kSin,
    kCos,
    kExp,
    kLn,
    kSqrt,
  };

  struct Node {
    Kind kind;
    double number = 0.0;  // kNumber, always >= 0
    int index = -1;       // kVariable
    int exponent = 0;     // kPow
    std::shared_ptr<const Node> lhs;
    std::shared_ptr<const Node> rhs;
  };
  using NodePtr = std::shared_ptr<const Node>;

  struct ValueGrad {
    double value;
    Eigen::VectorXd gradient;  // ordered as variables()
  };

  // The zero expression over `variables`.
  explicit Expr(std::vector<std::string> variables = {});

  static Expr parse(std::string_view source, std::vector<std::string> variables);
  static Expr constant(double value, std::vector<std::string> variables);
  static Expr variable(const std::string& name, std::vector<std::string> variables);

  const std::vector<std::string>& variables() const { return *variables_; }
  std::size_t arity() const { return variables_->size(); }
  const std::string& source() const { return source_; }
  const NodePtr& root() const { return root_; }

  // Fully parenthesized canonical text; parse(to_string()) is structurally
  // identical to *this.
  std::string to_string() const;

  double eval(std::span<const double> point) const;
  double eval(const Eigen::VectorXd& point) const {
    return eval(std::span<const double>(point.data(), point.size()));
  }
  double eval(const std::map<std::string, double>& point) const;

  // Exact forward-mode value and gradient.
  ValueGrad eval_grad(std::span<const double> point) const;
  ValueGrad eval_grad(const Eigen::VectorXd& point) const {
    return eval_grad(std::span<const double>(point.data(), point.size()));
  }
  ValueGrad eval_grad(const std::map<std::string, double>& point) const;

  bool structurally_equal(const Expr& other) const;
  // True when no variable occurs in the tree.
  bool is_constant() const;
  bool is_zero() const;

  // Same tree expressed over a different variable list; every variable used
  // must appear in `variables`.
  Expr rebind(std::vector<std::string> variables) const;

  // Replaces variable i by replacements[i]; all replacements must share one
  // variable list, which becomes the result's.
  Expr substitute(const std::vector<Expr>& replacements) const;

  // Symbolic partial derivative with light constant folding.
  Expr derivative(std::size_t variable) const;

  friend Expr operator+(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a, const Expr& b);
  friend Expr operator*(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a);

 private:
  Expr(NodePtr root, std::shared_ptr<const std::vector<std::string>> variables,
       std::string source);

  NodePtr root_;
  std::shared_ptr<const std::vector<std::string>> variables_;
  std::string source_;
};

Expr parse_expr(std::string_view source, std::vector<std::string> variables);

// Point given by name; missing names raise DimensionError.
double eval(const Expr& e, const std::map<std::string, double>& point);
Expr::ValueGrad eval_grad(const Expr& e, const std::map<std::string, double>& point);

// Identifier rule shared with model files: [A-Za-z_][A-Za-z0-9_]*, not a
// function name.
bool is_identifier(std::string_view name);

// Canonical shortest round-tripping decimal text for a double.
std::string format_number(double value);

}  // namespace phkit
