#include "phkit/analysis.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "phkit/error.hpp"
#include "phkit/linalg.hpp"
#include "test_generators.hpp"

namespace phkit {
namespace {

using testing_support::random_psd;
using testing_support::random_skew;
using testing_support::random_spd;
using testing_support::state_names;
using testing_support::uniform_vector;

const std::vector<std::string> kQP{"q", "p"};

Eigen::MatrixXd rotation() {
  Eigen::MatrixXd j(2, 2);
  j << 0, 1, -1, 0;
  return j;
}

Eigen::MatrixXd diag2(double a, double b) { return Eigen::Vector2d(a, b).asDiagonal().toDenseMatrix(); }

PhsModel oscillator(double r = 0.1) {
  return make_phs(kQP, MatrixField::constant(rotation(), kQP), MatrixField::constant(diag2(0, r), kQP),
                  MatrixField::constant(Eigen::Vector2d(0, 1), kQP),
                  Hamiltonian::quadratic(Eigen::MatrixXd::Identity(2, 2)));
}

PhsModel pendulum() {
  return make_phs(kQP, MatrixField::constant(rotation(), kQP), MatrixField::constant(diag2(0, 0.1), kQP),
                  MatrixField::constant(Eigen::Vector2d(0, 1), kQP),
                  Hamiltonian::expression(parse_expr("1 - cos(q) + 0.5*p^2", kQP)));
}

const std::vector<std::string> kX3{"x1", "x2", "x3"};

PhsModel three_state() {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(3, 3);
  J(0, 1) = 1;
  J(1, 0) = -1;
  return make_phs(kX3, MatrixField::constant(J, kX3), MatrixField::constant(Eigen::MatrixXd::Zero(3, 3), kX3),
                  MatrixField::constant(Eigen::Vector3d(0, 1, 0), kX3),
                  Hamiltonian::quadratic(Eigen::Vector3d(1, 1, 0).asDiagonal().toDenseMatrix()));
}

// Closed-form solution of qdot = p, pdot = -q - c p from (q0, 0).
Eigen::Vector2d damped_solution(double c, double q0, double t) {
  const double a = c / 2.0;
  const double w = std::sqrt(1.0 - a * a);
  const double e = std::exp(-a * t);
  const double q = q0 * e * (std::cos(w * t) + a / w * std::sin(w * t));
  const double p = -q0 * e * std::sin(w * t) / w;
  return {q, p};
}

TEST(SteadyState, DrivenOscillator) {
  const SteadyState ss = steady_state(oscillator(), Eigen::VectorXd::Ones(1), Eigen::Vector2d::Zero());
  // (J - R) x = -G u: p = 0 from the first row, then q = 1.
  EXPECT_NEAR(ss.x_bar(0), 1.0, 1e-12);
  EXPECT_NEAR(ss.x_bar(1), 0.0, 1e-12);
  EXPECT_NEAR(ss.y_bar(0), 0.0, 1e-12);
  EXPECT_TRUE(ss.closed_form);
  EXPECT_LE(ss.residual, 1e-10 * 2);
}

TEST(SteadyState, ZeroInputGivesMinimizer) {
  const SteadyState ss = steady_state(oscillator(), Eigen::VectorXd::Zero(1), Eigen::Vector2d(0.3, -0.2));
  EXPECT_LE(ss.x_bar.norm(), 1e-14);
  EXPECT_LE(ss.y_bar.norm(), 1e-14);
}

TEST(SteadyState, ZeroMapHasNoSteadyState) {
  const PhsModel m = make_phs(kQP, MatrixField::constant(Eigen::MatrixXd::Zero(2, 2), kQP),
                              MatrixField::constant(Eigen::MatrixXd::Zero(2, 2), kQP),
                              MatrixField::constant(Eigen::Vector2d(0, 1), kQP),
                              Hamiltonian::quadratic(Eigen::MatrixXd::Identity(2, 2)));
  EXPECT_THROW(steady_state(m, Eigen::VectorXd::Ones(1), Eigen::Vector2d::Zero()), SingularSystemError);
}

TEST(SteadyState, NonUniqueSolutionNearestGuess) {
  // Only p is constrained; q keeps the guess.
  const PhsModel m = make_phs(kQP, MatrixField::constant(Eigen::MatrixXd::Zero(2, 2), kQP),
                              MatrixField::constant(diag2(0, 1), kQP),
                              MatrixField::constant(Eigen::Vector2d(0, 1), kQP),
                              Hamiltonian::quadratic(Eigen::MatrixXd::Identity(2, 2)));
  const SteadyState ss = steady_state(m, Eigen::VectorXd::Constant(1, 2.0), Eigen::Vector2d(0.7, 0));
  EXPECT_NEAR(ss.x_bar(0), 0.7, 1e-12);
  EXPECT_NEAR(ss.x_bar(1), 2.0, 1e-12);
}

TEST(SteadyState, QuadraticExpressionUsesClosedForm) {
  PhsModel m = oscillator();
  m.H = Hamiltonian::expression(parse_expr("0.5*q^2 + 0.5*p^2", kQP));
  const SteadyState ss = steady_state(m, Eigen::VectorXd::Ones(1), Eigen::Vector2d::Zero());
  EXPECT_TRUE(ss.closed_form);
  EXPECT_NEAR(ss.x_bar(0), 1.0, 1e-12);
}

TEST(SteadyState, NewtonOnPendulum) {
  const SteadyState ss = steady_state(pendulum(), Eigen::VectorXd::Constant(1, 0.5), Eigen::Vector2d(0.3, 0.1));
  EXPECT_FALSE(ss.closed_form);
  EXPECT_NEAR(ss.x_bar(0), std::asin(0.5), 1e-10);
  EXPECT_NEAR(ss.x_bar(1), 0.0, 1e-10);
  EXPECT_LE(ss.residual, 1e-10 * 1.5);
}

TEST(SteadyState, NewtonFailureIsReported) {
  // sin q = 2 has no solution.
  EXPECT_THROW(steady_state(pendulum(), Eigen::VectorXd::Constant(1, 2.0), Eigen::Vector2d(0.3, 0.0)),
               ConvergenceError);
}

TEST(SteadyState, RequiresConstantMatrices) {
  PhsModel m = oscillator();
  MatrixField J(2, 2, kQP);
  J.set(0, 1, parse_expr("q", kQP));
  J.set(1, 0, parse_expr("-q", kQP));
  m.J = J;
  EXPECT_THROW(steady_state(m, Eigen::VectorXd::Ones(1), Eigen::Vector2d::Zero()), PreconditionError);
}

TEST(SteadyState, RandomQuadraticModelsMatchDirectSolve) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = 2 + trial % 4;
    const auto names = state_names(n);
    const Eigen::MatrixXd J = random_skew(rng, n);
    const Eigen::MatrixXd R = random_spd(rng, n);
    const Eigen::MatrixXd Q = random_spd(rng, n);
    const Eigen::VectorXd b = uniform_vector(rng, n, -1, 1);
    const Eigen::MatrixXd G = testing_support::uniform_matrix(rng, n, 1, -1, 1);
    const PhsModel m = make_phs(names, MatrixField::constant(J, names), MatrixField::constant(R, names),
                                MatrixField::constant(G, names), Hamiltonian::quadratic(Q, b));
    const Eigen::VectorXd u = uniform_vector(rng, 1, -2, 2);
    const SteadyState ss = steady_state(m, u, Eigen::VectorXd::Zero(n));
    const Eigen::VectorXd oracle = ((J - R) * Q).lu().solve(-G * u - (J - R) * b);
    EXPECT_LE((ss.x_bar - oracle).norm(), 1e-9 * (1 + oracle.norm()));
    EXPECT_LE(ss.residual, kSteadyStateTolerance * (1 + (G * u).norm()));
  }
}

TEST(Shifted, QuadraticIsCenteredForm) {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd Q = random_spd(rng, 3);
  const Eigen::VectorXd b = uniform_vector(rng, 3, -1, 1);
  const Eigen::VectorXd xb = uniform_vector(rng, 3, -1, 1);
  const ShiftedHamiltonian sh(Hamiltonian::quadratic(Q, b, 0.4), xb);
  const Hamiltonian as_h = sh.as_hamiltonian(kX3);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd x = uniform_vector(rng, 3, -2, 2);
    const double expected = 0.5 * (x - xb).dot(Q * (x - xb));
    EXPECT_NEAR(sh.value(x), expected, 1e-12);
    EXPECT_NEAR(as_h.value(x), expected, 1e-12);
  }
}

TEST(Shifted, VanishesWithZeroGradientAtShift) {
  std::mt19937_64 rng(5);
  const Hamiltonian h = Hamiltonian::expression(parse_expr("1 - cos(q) + 0.5*p^2 + 0.1*q^4", kQP));
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd xb = uniform_vector(rng, 2, -2, 2);
    const ShiftedHamiltonian sh(h, xb);
    EXPECT_NEAR(sh.value(xb), 0.0, 1e-14);
    EXPECT_LE(sh.gradient(xb).norm(), 1e-14);
    const Hamiltonian as_h = sh.as_hamiltonian(kQP);
    EXPECT_NEAR(as_h.value(xb), 0.0, 1e-13);
    EXPECT_LE(as_h.value_grad(xb).gradient.norm(), 1e-13);
  }
}

TEST(Shifted, FieldIdentityAndConvexity) {
  const PhsModel m = oscillator();
  const SteadyState ss = steady_state(m, Eigen::VectorXd::Ones(1), Eigen::Vector2d::Zero());
  const ShiftedSystem sys = shifted_system(m, ss);
  EXPECT_LE(sys.identity_residual, 1e-12);
  EXPECT_EQ(sys.convexity, Definiteness::kPositiveDefinite);
  EXPECT_NEAR(sys.min_hessian_eigenvalue, 1.0, 1e-12);
}

TEST(Shifted, PendulumNeighbourhoodIsNonNegative) {
  const PhsModel m = pendulum();
  const SteadyState ss = steady_state(m, Eigen::VectorXd::Constant(1, 0.5), Eigen::Vector2d(0.3, 0.0));
  const ShiftedSystem sys = shifted_system(m, ss);
  EXPECT_LE(sys.identity_residual, 1e-10);
  ASSERT_EQ(sys.convexity, Definiteness::kPositiveDefinite);
  std::mt19937_64 rng(8);
  for (int k = 0; k < 200; ++k) {
    const Eigen::VectorXd x = ss.x_bar + uniform_vector(rng, 2, -0.5, 0.5);
    EXPECT_GE(sys.energy.value(x), -1e-14);
  }
}

TEST(Shifted, IndefiniteHessianClassified) {
  PhsModel m = oscillator();
  m.H = Hamiltonian::quadratic(diag2(-1, 1));
  const SteadyState ss = steady_state(m, Eigen::VectorXd::Zero(1), Eigen::Vector2d::Zero());
  EXPECT_EQ(shifted_system(m, ss).convexity, Definiteness::kIndefinite);
  m.H = Hamiltonian::quadratic(diag2(0, 1));
  EXPECT_EQ(shifted_system(m, ss).convexity, Definiteness::kPositiveSemidefinite);
}

TEST(Shifted, DrivenOscillatorShiftedEnergyDecreases) {
  const PhsModel m = oscillator();
  const SteadyState ss = steady_state(m, Eigen::VectorXd::Ones(1), Eigen::Vector2d::Zero());
  const ShiftedSystem sys = shifted_system(m, ss);
  const Trajectory tr =
      simulate_phs(m, SignalSpec::constant(Eigen::VectorXd::Ones(1)), Eigen::Vector2d(1.5, 0), 20.0, 0.01,
                   Method::kMidpoint);
  for (std::size_t k = 1; k < tr.x.size(); ++k)
    EXPECT_LE(sys.energy.value(tr.x[k]) - sys.energy.value(tr.x[k - 1]), 1e-12);
}

TEST(Shifted, OutputFeedbackMatchesClosedForm) {
  const PhsModel m = oscillator();
  const SteadyState ss = steady_state(m, Eigen::VectorXd::Ones(1), Eigen::Vector2d::Zero());
  const InputLaw law = [&](double, const Eigen::VectorXd& x) {
    const Eigen::VectorXd y = phs_vector_field(m, x, Eigen::VectorXd::Zero(1)).y;
    return Eigen::VectorXd(ss.u_bar - 0.5 * (y - ss.y_bar));
  };
  const Trajectory tr = simulate_phs(m, law, Eigen::Vector2d(1.5, 0), 20.0, 0.001, Method::kMidpoint);
  // Error dynamics: damped oscillator with total damping 0.6.
  const Eigen::Vector2d oracle = damped_solution(0.6, 0.5, 20.0);
  const Eigen::VectorXd err = tr.x.back() - ss.x_bar;
  EXPECT_NEAR(err.norm(), oracle.norm(), 1e-6);
  EXPECT_NEAR(oracle.norm(), 1.3287e-3, 1e-6);
}

TEST(Casimirs, ThreeStateExample) {
  const CasimirBasis basis = linear_casimirs(three_state());
  ASSERT_EQ(basis.size(), 1u);
  EXPECT_LE((basis.covectors[0] - Eigen::Vector3d(0, 0, 1)).norm(), 1e-14);
  EXPECT_LE(basis.j_residuals[0], 1e-15);
}

TEST(Casimirs, InvertibleJHasNone) { EXPECT_EQ(linear_casimirs(oscillator(0.0)).size(), 0u); }

TEST(Casimirs, RandomPairsMatchRankDeficiency) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 2 + trial % 6;
    const auto names = state_names(n);
    // Low-rank structure so kernels are non-trivial.
    const Eigen::MatrixXd B = testing_support::uniform_matrix(rng, n, 1 + trial % n, -1, 1);
    const Eigen::MatrixXd S = random_skew(rng, B.cols());
    const Eigen::MatrixXd J = B * S * B.transpose();
    const Eigen::MatrixXd R = random_psd(rng, n, trial % 3);
    const PhsModel m = make_phs(names, MatrixField::constant(J, names), MatrixField::constant(R, names),
                                MatrixField::constant(Eigen::MatrixXd::Zero(n, 1), names),
                                Hamiltonian::quadratic(Eigen::MatrixXd::Identity(n, n)));
    const CasimirBasis basis = linear_casimirs(m);
    Eigen::MatrixXd stacked(2 * n, n);
    stacked << J, R;
    // Oracle: rank from a full-pivot LU with the same relative threshold.
    Eigen::FullPivLU<Eigen::MatrixXd> lu(stacked);
    lu.setThreshold(1e-10);
    EXPECT_EQ(static_cast<Eigen::Index>(basis.size()), n - lu.rank());
    for (std::size_t i = 0; i < basis.size(); ++i) {
      EXPECT_LE(std::max(basis.j_residuals[i], basis.r_residuals[i]), 1e-10);
      for (std::size_t j = 0; j < basis.size(); ++j)
        EXPECT_NEAR(basis.covectors[i].dot(basis.covectors[j]), i == j ? 1.0 : 0.0, 1e-12);
    }
  }
}

TEST(Casimirs, DriftAlongUnforcedRuns) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::Index n = 4;
    const auto names = state_names(n);
    const Eigen::MatrixXd B = testing_support::uniform_matrix(rng, n, 2, -1, 1);
    const Eigen::MatrixXd J = B * random_skew(rng, 2) * B.transpose();
    const Eigen::MatrixXd R = B * random_psd(rng, 2, 1) * B.transpose();
    const PhsModel m = make_phs(names, MatrixField::constant(J, names), MatrixField::constant(R, names),
                                MatrixField::constant(Eigen::MatrixXd::Zero(n, 1), names),
                                Hamiltonian::quadratic(random_spd(rng, n)));
    const CasimirBasis basis = linear_casimirs(m);
    ASSERT_EQ(basis.size(), 2u);
    const Eigen::VectorXd x0 = uniform_vector(rng, n, -1, 1);
    const Trajectory tr = simulate_phs(m, SignalSpec::zero(1), x0, 100.0, 0.01, Method::kMidpoint);
    for (const auto& c : basis.covectors) {
      double drift = 0.0;
      for (const auto& x : tr.x) drift = std::max(drift, std::abs(c.dot(x - x0)));
      EXPECT_LE(drift, 1e-8 * (1 + std::abs(c.dot(x0))));
    }
  }
}

TEST(Casimirs, RequiresConstantStructure) {
  PhsModel m = oscillator();
  MatrixField R(2, 2, kQP);
  R.set(1, 1, parse_expr("q^2", kQP));
  m.R = R;
  EXPECT_THROW(linear_casimirs(m), PreconditionError);
}

TEST(VerifyCasimir, Examples) {
  const auto samples3 = default_samples(3);
  const CasimirReport ok = verify_casimir(three_state(), parse_expr("x3", kX3), samples3);
  EXPECT_TRUE(ok.passed);
  EXPECT_EQ(ok.j_residual, 0.0);
  EXPECT_EQ(ok.r_residual, 0.0);

  const auto samples2 = default_samples(2);
  const CasimirReport bad = verify_casimir(oscillator(0.0), parse_expr("q", kQP), samples2);
  EXPECT_FALSE(bad.passed);
  EXPECT_NEAR(bad.j_residual, 1.0, 1e-15);

  EXPECT_TRUE(verify_casimir(oscillator(), parse_expr("3.5", kQP), samples2).passed);
}

TEST(VerifyCasimir, ForcedTrajectoryRate) {
  PhsModel m = three_state();
  m.G = MatrixField::constant(Eigen::Vector3d(0, 1, 1), kX3);
  const Trajectory tr = simulate_phs(m, SignalSpec::expressions({parse_expr("sin(t)", {"t"})}),
                                     Eigen::Vector3d(1, 0, 1), 5.0, 0.01, Method::kMidpoint);
  const CasimirReport rep = verify_casimir(m, parse_expr("x3", kX3), default_samples(3), &tr);
  ASSERT_TRUE(rep.trajectory_residual.has_value());
  EXPECT_LE(*rep.trajectory_residual, 1e-10);
}

TEST(EnergyCasimir, PureEnergyAccepted) {
  const auto r = energy_casimir_candidate(oscillator(), std::vector<Expr>{}, parse_expr("z0", {"z0"}),
                                          Eigen::Vector2d::Zero());
  EXPECT_TRUE(r.report.accepted) << r.report.reason;
  EXPECT_LE(r.report.gradient_norm, 1e-9);
  EXPECT_NEAR(r.report.min_hessian_eigenvalue, 1.0, 1e-6);
}

TEST(EnergyCasimir, CasimirShapingCreatesMinimum) {
  const PhsModel m = three_state();
  const auto r = energy_casimir_candidate(m, linear_casimirs(m), parse_expr("z0 + 0.5*(z1 - 1)^2", {"z0", "z1"}),
                                          Eigen::Vector3d(0, 0, 1));
  EXPECT_TRUE(r.report.accepted) << r.report.reason;
  EXPECT_LE(r.report.gradient_norm, 1e-6);
  EXPECT_NEAR(r.report.min_hessian_eigenvalue, 1.0, 1e-6);
  EXPECT_LE(r.report.max_increase, 1e-9);
  // H alone is flat along x3.
  const auto flat = energy_casimir_candidate(m, std::vector<Expr>{}, parse_expr("z0", {"z0"}),
                                             Eigen::Vector3d(0, 0, 1));
  EXPECT_FALSE(flat.report.accepted);
}

TEST(EnergyCasimir, NegativeEnergyWeightRejected) {
  try {
    energy_casimir_candidate(oscillator(), std::vector<Expr>{}, parse_expr("-z0", {"z0"}), Eigen::Vector2d::Zero());
    FAIL() << "expected PreconditionError";
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("dPhi/dz0 = -1"), std::string::npos);
  }
}

TEST(EnergyCasimir, UncertifiedCasimirRejected) {
  EXPECT_THROW(energy_casimir_candidate(oscillator(0.0), {parse_expr("q", kQP)},
                                        parse_expr("z0 + z1^2", {"z0", "z1"}), Eigen::Vector2d::Zero()),
               PreconditionError);
}

TEST(EnergyCasimir, NonMinimumTargetRejected) {
  const auto r = energy_casimir_candidate(oscillator(), std::vector<Expr>{}, parse_expr("z0", {"z0"}),
                                          Eigen::Vector2d(1, 0));
  EXPECT_FALSE(r.report.accepted);
}

TEST(EnergyCasimir, AcceptedCandidateNonIncreasingOnRandomRuns) {
  std::mt19937_64 rng(17);
  const PhsModel m = three_state();
  const auto r = energy_casimir_candidate(m, linear_casimirs(m), parse_expr("z0 + 0.5*(z1 - 1)^2", {"z0", "z1"}),
                                          Eigen::Vector3d(0, 0, 1));
  ASSERT_TRUE(r.candidate.accepted);
  for (int k = 0; k < 10; ++k) {
    const Trajectory tr = simulate_phs(m, SignalSpec::zero(1), uniform_vector(rng, 3, -1, 1), 10.0, 0.01,
                                       Method::kMidpoint);
    const LyapunovAudit a = audit_lyapunov(r.candidate, tr);
    EXPECT_TRUE(a.passed);
    EXPECT_LE(a.max_increase, 1e-9);
  }
}

}  // namespace
}  // namespace phkit
