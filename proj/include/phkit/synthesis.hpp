#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phkit/analysis.hpp"
#include "phkit/error.hpp"
#include "phkit/model.hpp"
#include "phkit/simulate.hpp"

namespace phkit {

inline constexpr double kSynthesisTolerance = 1e-10;
inline constexpr double kConvergenceTolerance = 1e-3;

// Plant and controller on the product state (x, xi) with H_cl = H + H_c.
struct ClosedLoopPhs {
  PhsModel model;
  std::string plant_id;
  std::string controller_id;
  std::string kind;
  Eigen::Index n_plant = 0;
  Eigen::Index n_controller = 0;
};

// u = -y_c + v, u_c = y + v_c; inputs (v, v_c).
ClosedLoopPhs negative_feedback(const PhsModel& plant, const PhsModel& controller);

// J_cl = blockdiag(J1, J2) + blockdiag(G1, G2) J_int blockdiag(G1, G2)^T.
// J_int is constant or a field over the product state names.
ClosedLoopPhs interconnect_jint(const PhsModel& sys1, const PhsModel& sys2, const MatrixField& J_int);

// C_i(x, xi) = xi_i - F_i x.
struct ClosedLoopCasimir {
  Eigen::Index index = 0;
  Eigen::VectorXd F_row;
  double j_residual = 0.0;
  double r_residual = 0.0;

  Eigen::VectorXd covector() const;  // (-F_i, e_i)
};

struct ObstacleReport {
  bool obstacle = false;
  // Per controller state: ||R_cl w|| for the J-only solution, when one exists.
  std::vector<std::optional<double>> r_residuals;
  std::string detail;
};

struct CasimirSearchResult {
  ClosedLoopPhs closed_loop;
  std::vector<ClosedLoopCasimir> casimirs;
  ObstacleReport obstacle;

  // F stacked from the found Casimirs when every controller state has one.
  std::optional<Eigen::MatrixXd> F() const;
};

CasimirSearchResult closedloop_casimir_search(const PhsModel& plant, const PhsModel& controller);

enum class FeedbackKind { kStateFeedback, kOutputDamping };
const char* to_string(FeedbackKind k);

struct FeedbackLaw {
  FeedbackKind kind = FeedbackKind::kStateFeedback;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> law;
  // law(x) = gain x + offset when the law is affine.
  std::optional<Eigen::MatrixXd> gain;
  std::optional<Eigen::VectorXd> offset;
  std::optional<Hamiltonian> shaped;
  std::optional<PhsModel> shaped_model;
  // max over samples of |f(x, law(x)) - (J - R) grad H_s| for shaping laws.
  double identity_residual = 0.0;

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const { return law(x); }
  InputLaw as_input() const;
};

// u = a(x) + b(x).
FeedbackLaw combine(const FeedbackLaw& a, const FeedbackLaw& b);

// alpha(x) = -G_c^T dH_c/dxi(F x + lambda), H_s(x) = H(x) + H_c(F x + lambda).
// PreconditionError unless (F, lambda) defines closed-loop Casimirs.
FeedbackLaw reduce_to_state_feedback(const PhsModel& plant, const PhsModel& controller, const Eigen::MatrixXd& F,
                                     const Eigen::VectorXd& lambda);

// v(x) = -c G^T grad V(x). PreconditionError for a rejected candidate.
FeedbackLaw damping_injection(const PhsModel& model, const LyapunovCandidate& V, double c = 1.0);

struct ConvergenceAudit {
  double max_increase = 0.0;  // of V along the closed loop
  double final_error = 0.0;   // ||x(T) - x*||
  double tolerance = kConvergenceTolerance;
  bool converged = false;
};

ConvergenceAudit audit_convergence(const PhsModel& model, const FeedbackLaw& law, const LyapunovCandidate& V,
                                   const Eigen::VectorXd& x0, double T, double h = 0.01);

class MatchingError : public CheckFailure {
 public:
  MatchingError(double residual, Eigen::MatrixXd residual_matrix);
  const Eigen::MatrixXd& residual_matrix() const { return residual_matrix_; }

 private:
  Eigen::MatrixXd residual_matrix_;
};

struct IdaPbcResult {
  FeedbackLaw law;
  Eigen::MatrixXd annihilator;      // G-perp
  Eigen::MatrixXd residual_matrix;  // G-perp [(J - R)[Q b] - (J_d - R_d)[Q_s b_s]]
  double matching_residual = 0.0;
  double field_residual = 0.0;  // closed loop vs (J_d - R_d) grad H_s at samples
};

// Linear-quadratic matching. MatchingError when the matching residual
// exceeds kSynthesisTolerance; PreconditionError for rank-deficient G,
// non-skew J_d, indefinite R_d or non-quadratic energies.
IdaPbcResult ida_pbc_linear(const PhsModel& plant, const Eigen::MatrixXd& J_d, const Eigen::MatrixXd& R_d,
                            const Hamiltonian& H_s, std::uint64_t seed = kDefaultSeed);

// max_k (Hdot_k - u_k^T y_A,k) along a run of the base model.
double alternate_output_margin(const ExtendedPhsModel& model, const Trajectory& traj);

}  // namespace phkit
