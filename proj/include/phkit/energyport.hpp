#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phkit/expr.hpp"
#include "phkit/model.hpp"

namespace phkit {

inline constexpr double kIohConditionTolerance = 1e-9;
inline constexpr double kMarginalTolerance = 1e-9;

// Affine input-output Hamiltonian system
//   xdot = [J - R](grad H - dC/dx^T u),  y = C(x).
struct IohModel {
  std::vector<std::string> state;
  MatrixField J;
  MatrixField R;
  Hamiltonian H;
  std::vector<Expr> C;  // one expression per output, over `state`
  std::map<std::string, std::string> metadata;

  Eigen::Index n() const { return static_cast<Eigen::Index>(state.size()); }
  Eigen::Index m() const { return static_cast<Eigen::Index>(C.size()); }
};

// Rebinds constant fields and output expressions to the state names and
// checks dimensions (DimensionError).
IohModel make_ioh(std::vector<std::string> state, MatrixField J, MatrixField R, Hamiltonian H,
                  std::vector<Expr> C);

Eigen::VectorXd ioh_output(const IohModel& ioh, const Eigen::VectorXd& x);
// dC/dx at x (m x n), exact.
Eigen::MatrixXd output_jacobian(const IohModel& ioh, const Eigen::VectorXd& x);
// dC/dx as a symbolic field.
MatrixField output_jacobian_field(const IohModel& ioh);

struct IohEval {
  Eigen::VectorXd xdot;
  Eigen::VectorXd y;
  Eigen::VectorXd ydot;
};

IohEval ioh_vector_field(const IohModel& ioh, const Eigen::VectorXd& x, const Eigen::VectorXd& u);

// ydot = dC/dx [J - R](grad H - dC/dx^T u).
Eigen::VectorXd differentiated_output(const IohModel& ioh, const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& u);

// Structure checks of J and R plus evaluability of C at the samples.
ValidationReport validate_ioh(const IohModel& ioh, std::span<const Eigen::VectorXd> samples,
                              std::optional<std::uint64_t> seed = std::nullopt);
ValidationReport validate_ioh(const IohModel& ioh, std::uint64_t seed = kDefaultSeed);

// Extended PHS whose passive output equals the differentiated output:
//   G' = -J dC^T,  P = -R dC^T,  S = dC R dC^T,  M = -dC J dC^T.
ExtendedPhsModel ioh_to_phs(const IohModel& ioh);

// Verifies the four identities linking (G', P, S, M) to C at the samples and
// returns the IOH form; CheckFailure names the first violated identity.
IohModel phs_to_ioh(const ExtendedPhsModel& phs, std::vector<Expr> C,
                    std::uint64_t seed = kDefaultSeed);
IohModel phs_to_ioh(const PhsModel& phs, std::vector<Expr> C, std::uint64_t seed = kDefaultSeed);

// Closed loop of two IOH systems. The state is (x1, x2) with colliding names
// suffixed _1 / _2; outputs are (C1, C2) and the new inputs (v1, v2). `model.H`
// is the closed-loop Hamiltonian.
struct IohInterconnection {
  IohModel model;
  std::string convention;
};

// u1 = y2 + v1, u2 = y1 + v2;  H_cl = H1 + H2 - C1^T C2.
IohInterconnection positive_feedback(const IohModel& a, const IohModel& b);

// u = -dP/dy(y) + v closes the loop with the static system y_s = -dP/du_s;
// H_cl = H + P(C). P is over m output names.
IohModel static_energy_feedback(const IohModel& ioh, const Expr& P);

// u_i = -dP/dy_i(y1, y2) + v_i;  H_int = H1 + H2 + P(C1, C2). P is over
// m1 + m2 names, y1 first.
IohInterconnection general_p_feedback(const IohModel& a, const IohModel& b, const Expr& P);

// Linear output map C(x) = D x + d when every entry of dC/dx is constant.
std::optional<std::pair<Eigen::MatrixXd, Eigen::VectorXd>> affine_output(const IohModel& ioh);

enum class StabilityVerdict { kStable, kUnstable, kMarginal };
const char* to_string(StabilityVerdict v);

struct StabilityReport {
  Eigen::MatrixXd dc_gain_1;  // K_i = D_i Q_i^-1 D_i^T
  Eigen::MatrixXd dc_gain_2;
  double loop_gain = 0.0;     // spectral radius of K_1 K_2
  Eigen::MatrixXd hessian;    // Hessian of H_cl at the origin
  double min_eigenvalue = 0.0;
  StabilityVerdict verdict = StabilityVerdict::kMarginal;       // from the Hessian
  StabilityVerdict loop_verdict = StabilityVerdict::kMarginal;  // from the loop gain
  bool agrees() const { return verdict == loop_verdict; }
};

// Requires quadratic H_i with positive definite Q_i and linear C_i
// (PreconditionError otherwise).
StabilityReport dc_loop_gain_stability(const IohModel& a, const IohModel& b);

}  // namespace phkit
