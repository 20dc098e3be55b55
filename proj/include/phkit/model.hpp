#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "phkit/expr.hpp"

namespace phkit {

// Tolerance for the structural checks on J, R and the extended block matrix.
inline constexpr double kStructureTolerance = 1e-10;
inline constexpr std::uint64_t kDefaultSeed = 0;
inline constexpr int kDefaultSampleCount = 32;

// Matrix whose entries are real constants or expressions of the state.
class MatrixField {
 public:
  using Entry = std::variant<double, Expr>;

  MatrixField() = default;
  MatrixField(Eigen::Index rows, Eigen::Index cols, std::vector<std::string> variables);

  static MatrixField constant(const Eigen::MatrixXd& value, std::vector<std::string> variables);
  static MatrixField zero(Eigen::Index rows, Eigen::Index cols,
                          std::vector<std::string> variables);
  static MatrixField identity(Eigen::Index n, std::vector<std::string> variables);

  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }
  const std::vector<std::string>& variables() const { return variables_; }

  const Entry& at(Eigen::Index i, Eigen::Index j) const { return entries_[i * cols_ + j]; }
  // Constant expressions are stored as plain numbers.
  void set(Eigen::Index i, Eigen::Index j, Entry value);

  bool is_constant() const;
  // Value of a constant field; PreconditionError otherwise.
  Eigen::MatrixXd constant_value() const;
  Eigen::MatrixXd evaluate(const Eigen::VectorXd& x) const;

  MatrixField transpose() const;
  MatrixField rebind(std::vector<std::string> variables) const;
  // Substitutes every expression entry; see Expr::substitute.
  MatrixField substitute(const std::vector<Expr>& replacements,
                         std::vector<std::string> variables) const;

  // [[a, b], [c, d]]; empty blocks may be default-constructed 0x0 fields
  // when their size follows from the others.
  static MatrixField blocks(const MatrixField& a, const MatrixField& b, const MatrixField& c,
                            const MatrixField& d);
  static MatrixField block_diagonal(const MatrixField& a, const MatrixField& b);

  friend MatrixField operator+(const MatrixField& a, const MatrixField& b);
  friend MatrixField operator-(const MatrixField& a, const MatrixField& b);
  friend MatrixField operator*(const MatrixField& a, const MatrixField& b);
  friend MatrixField operator-(const MatrixField& a);
  friend MatrixField operator*(double s, const MatrixField& a);

 private:
  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
  std::vector<std::string> variables_;
  std::vector<Entry> entries_;
};

// Stored energy: quadratic form 1/2 x^T Q x + b^T x + c, or an expression.
class Hamiltonian {
 public:
  struct Quadratic {
    Eigen::MatrixXd Q;
    Eigen::VectorXd b;
    double c = 0.0;
  };
  using ValueGrad = Expr::ValueGrad;

  Hamiltonian() : form_(Quadratic{}) {}

  // Q is symmetrized; an empty b means zero.
  static Hamiltonian quadratic(const Eigen::MatrixXd& Q, const Eigen::VectorXd& b = {},
                               double c = 0.0);
  static Hamiltonian expression(Expr e);

  bool is_quadratic() const { return std::holds_alternative<Quadratic>(form_); }
  const Quadratic& quadratic_form() const { return std::get<Quadratic>(form_); }
  const Expr& expr() const { return std::get<Expr>(form_); }
  Eigen::Index dimension() const;

  double value(const Eigen::VectorXd& x) const;
  ValueGrad value_grad(const Eigen::VectorXd& x) const;
  // Exact for quadratics; central differences of the exact gradient otherwise.
  Eigen::MatrixXd hessian(const Eigen::VectorXd& x) const;

  Expr to_expr(const std::vector<std::string>& variables) const;

 private:
  std::variant<Quadratic, Expr> form_;
};

// Coefficients of e when it is a polynomial of degree at most two (checked
// symbolically: every second derivative is variable-free).
std::optional<Hamiltonian::Quadratic> quadratic_coefficients(const Expr& e);

// Quadratic form when one can be recovered exactly, otherwise the expression.
Hamiltonian hamiltonian_from_expr(const Expr& e);

// State of two systems side by side. Names present in both factors get the
// suffixes _1 / _2; embed_a[i] is variable i of the first factor as an
// expression over `names`.
struct ProductState {
  std::vector<std::string> names;
  std::vector<Expr> embed_a;
  std::vector<Expr> embed_b;
};

ProductState product_state(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Re-expresses a field or expression of one factor over the product names.
MatrixField embed_in_product(const MatrixField& f, const std::vector<Expr>& vars,
                             const std::vector<std::string>& names);
Expr embed_in_product(const Expr& e, const std::vector<Expr>& vars,
                      const std::vector<std::string>& names);

Hamiltonian::ValueGrad hamiltonian_value_grad(const Hamiltonian& h, const Eigen::VectorXd& x);

// Nonlinear resistive port: e_R = -dR/df_R(f_R) with f_R = G_R^T dH/dx.
struct Rayleigh {
  MatrixField GR;   // n x r
  Expr function;    // over r flow names
};

struct PhsModel {
  std::vector<std::string> state;
  MatrixField J;
  MatrixField R;
  MatrixField G;
  Hamiltonian H;
  std::optional<Rayleigh> rayleigh;
  std::map<std::string, std::string> metadata;

  Eigen::Index n() const { return static_cast<Eigen::Index>(state.size()); }
  Eigen::Index m() const { return G.cols(); }
  bool has_constant_structure() const {
    return J.is_constant() && R.is_constant() && G.is_constant() && !rayleigh;
  }
};

// Builds a model and checks dimensions and variable lists (DimensionError).
PhsModel make_phs(std::vector<std::string> state, MatrixField J, MatrixField R, MatrixField G,
                  Hamiltonian H, std::optional<Rayleigh> rayleigh = std::nullopt);
void check_dimensions(const PhsModel& model);

struct PhsEval {
  Eigen::VectorXd xdot;
  Eigen::VectorXd y;
};

PhsEval phs_vector_field(const PhsModel& model, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& u);

// Power dissipated at x: grad H^T R grad H, or f_R^T dR/df_R(f_R) for
// Rayleigh models. Non-negative for valid models.
double dissipated_power(const PhsModel& model, const Eigen::VectorXd& x);

struct Check {
  std::string name;
  bool passed = true;
  double value = 0.0;      // worst-case measured quantity
  double tolerance = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::optional<std::uint64_t> seed;
  std::size_t sample_count = 0;
  std::vector<Check> checks;

  bool passed() const;
  const Check* find(const std::string& name) const;
};

// Origin plus `count` points drawn uniformly from [-1, 1]^n.
std::vector<Eigen::VectorXd> default_samples(Eigen::Index n, std::uint64_t seed = kDefaultSeed,
                                             int count = kDefaultSampleCount);

ValidationReport validate_phs(const PhsModel& model, std::span<const Eigen::VectorXd> samples,
                              std::optional<std::uint64_t> seed = std::nullopt);
ValidationReport validate_phs(const PhsModel& model, std::uint64_t seed = kDefaultSeed);

// Model with alternate output y_A = [G' + P]^T grad H + [M + S] u, G' = G + P.
// `base.G` is the input matrix of the dynamics.
struct ExtendedPhsModel {
  PhsModel base;
  MatrixField P;
  MatrixField M;
  MatrixField S;

  // G' = G + P.
  MatrixField port_matrix() const { return base.G + P; }
};

ValidationReport validate_extended(const ExtendedPhsModel& model,
                                   std::span<const Eigen::VectorXd> samples);

// Throws CheckFailure naming the violated condition.
ExtendedPhsModel build_extended(const PhsModel& model, const MatrixField& P, const MatrixField& M,
                                const MatrixField& S, std::uint64_t seed = kDefaultSeed);

Eigen::VectorXd extended_output(const ExtendedPhsModel& model, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& u);

// Input signal as a function of time.
class SignalSpec {
 public:
  static SignalSpec zero(Eigen::Index m);
  static SignalSpec constant(Eigen::VectorXd value);
  // One expression per channel, each over the single variable "t".
  static SignalSpec expressions(std::vector<Expr> channels);

  Eigen::Index dimension() const { return dim_; }
  Eigen::VectorXd at(double t) const;

 private:
  Eigen::Index dim_ = 0;
  std::optional<Eigen::VectorXd> constant_;
  std::vector<Expr> channels_;
};

}  // namespace phkit
