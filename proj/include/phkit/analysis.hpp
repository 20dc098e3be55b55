#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phkit/model.hpp"
#include "phkit/simulate.hpp"

namespace phkit {

inline constexpr double kSteadyStateTolerance = 1e-10;
inline constexpr double kCasimirTolerance = 1e-9;
inline constexpr double kCasimirBasisTolerance = 1e-10;
inline constexpr double kCandidateGradientTolerance = 1e-6;
inline constexpr double kCandidateHessianTolerance = 1e-8;
inline constexpr double kCandidateStep = 1e-6;
inline constexpr double kLyapunovTolerance = 1e-9;

struct SteadyState {
  Eigen::VectorXd u_bar;
  Eigen::VectorXd x_bar;
  Eigen::VectorXd y_bar;
  double residual = 0.0;  // ||(J - R) grad H(x_bar) + G u_bar||
  bool closed_form = false;
  int newton_iterations = 0;
};

// Constant J, R, G required. Quadratic energies (or expressions that are
// exactly quadratic) are solved in closed form, taking the solution nearest
// x_guess when it is not unique; other energies use Newton from x_guess.
SteadyState steady_state(const PhsModel& model, const Eigen::VectorXd& u_bar,
                         const Eigen::VectorXd& x_guess);

// H(x) - grad H(x_bar)^T (x - x_bar) - H(x_bar).
class ShiftedHamiltonian {
 public:
  ShiftedHamiltonian(Hamiltonian base, Eigen::VectorXd x_bar);

  const Hamiltonian& base() const { return base_; }
  const Eigen::VectorXd& shift() const { return x_bar_; }
  double value(const Eigen::VectorXd& x) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;
  // The same function as a Hamiltonian object (quadratic when the base is).
  Hamiltonian as_hamiltonian(const std::vector<std::string>& state) const;

 private:
  Hamiltonian base_;
  Eigen::VectorXd x_bar_;
  Hamiltonian::ValueGrad at_shift_;
};

enum class Definiteness { kPositiveDefinite, kPositiveSemidefinite, kIndefinite };
const char* to_string(Definiteness d);

struct ShiftedSystem {
  ShiftedHamiltonian energy;
  // Same J, R, G with energy H-hat; its input is u - u_bar and its output
  // y - y_bar.
  PhsModel model;
  SteadyState steady;
  double identity_residual = 0.0;  // max over samples of the field mismatch
  Eigen::MatrixXd hessian;         // Hessian of H at x_bar
  double min_hessian_eigenvalue = 0.0;
  Definiteness convexity = Definiteness::kIndefinite;
};

ShiftedSystem shifted_system(const PhsModel& model, const SteadyState& steady,
                             std::uint64_t seed = kDefaultSeed);

struct CasimirBasis {
  std::vector<Eigen::VectorXd> covectors;  // orthonormal
  std::vector<double> j_residuals;         // ||J c||
  std::vector<double> r_residuals;         // ||R c||

  std::size_t size() const { return covectors.size(); }
  // c^T x over the given state names.
  std::vector<Expr> as_expressions(const std::vector<std::string>& state) const;
};

// Orthonormal basis of ker J intersected with ker R (constant J, R).
CasimirBasis linear_casimirs(const PhsModel& model);

struct CasimirReport {
  double j_residual = 0.0;  // max over samples of ||J grad C||
  double r_residual = 0.0;  // max over samples of ||R grad C||
  double tolerance = kCasimirTolerance;
  // |C(x_N) - C(x_0) - integral grad C^T G u dt| along a supplied run.
  std::optional<double> trajectory_residual;
  bool passed = false;
};

CasimirReport verify_casimir(const PhsModel& model, const Expr& C,
                             std::span<const Eigen::VectorXd> samples,
                             const Trajectory* trajectory = nullptr);

// V(x) = Phi(H(x), C_1(x), ..., C_k(x)), Phi over z0..zk.
struct LyapunovCandidate {
  std::vector<std::string> state;
  Hamiltonian H;
  std::vector<Expr> casimirs;
  Expr phi;
  Expr V;  // the composition as an expression over the state
  Eigen::VectorXd target;
  bool accepted = false;

  double value(const Eigen::VectorXd& x) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;
  double dphi_dz0(const Eigen::VectorXd& x) const;
};

struct MinimumReport {
  double gradient_norm = 0.0;  // central differences, step kCandidateStep
  double min_hessian_eigenvalue = 0.0;
  double dphi_dz0 = 0.0;
  // max_k (V(x_{k+1}) - V(x_k)) over u = 0 runs started near the target.
  double max_increase = 0.0;
  bool accepted = false;
  std::string reason;
};

struct EnergyCasimirResult {
  LyapunovCandidate candidate;
  MinimumReport report;
};

// PreconditionError when dPhi/dz0 <= 0 at the target or a Casimir fails
// verification.
EnergyCasimirResult energy_casimir_candidate(const PhsModel& model, const std::vector<Expr>& casimirs,
                                             const Expr& phi, const Eigen::VectorXd& target,
                                             std::uint64_t seed = kDefaultSeed);
EnergyCasimirResult energy_casimir_candidate(const PhsModel& model, const CasimirBasis& basis,
                                             const Expr& phi, const Eigen::VectorXd& target,
                                             std::uint64_t seed = kDefaultSeed);

struct LyapunovAudit {
  double max_increase = 0.0;
  double min_dphi_dz0 = 0.0;
  bool passed = false;
};

LyapunovAudit audit_lyapunov(const LyapunovCandidate& candidate, const Trajectory& traj);

}  // namespace phkit
