// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phkit/analysis.hpp"
#include "phkit/dirac.hpp"
#include "phkit/energyport.hpp"
#include "phkit/error.hpp"
#include "phkit/linalg.hpp"
#include "phkit/netbuild.hpp"
#include "phkit/simulate.hpp"
#include "phkit/synthesis.hpp"
#include "test_generators.hpp"

namespace {

using namespace phkit;
using testing_support::random_psd;
using testing_support::random_skew;
using testing_support::random_spd;
using testing_support::state_names;
using testing_support::uniform_matrix;
using testing_support::uniform_vector;

struct Outcome {
  bool passed = true;
  std::string detail;

  // Records one sub-check; the detail keeps the measured value.
  void require(bool ok, const char* fmt, double value) {
    char buf[160];
    std::snprintf(buf, sizeof buf, fmt, value);
    if (!detail.empty()) detail += "; ";
    detail += buf;
    if (!ok) {
      detail += " [X]";
      passed = false;
    }
  }
};

struct Criterion {
  int id;
  const char* title;
  double time_limit;  // seconds, 0 for none
  std::function<Outcome()> body;
};

const std::vector<std::string> kQP{"q", "p"};

Eigen::MatrixXd rotation() {
  Eigen::MatrixXd j(2, 2);
  j << 0, 1, -1, 0;
  return j;
}

Eigen::MatrixXd diag2(double a, double b) { return Eigen::Vector2d(a, b).asDiagonal().toDenseMatrix(); }

PhsModel oscillator(const Eigen::MatrixXd& R, const Eigen::Vector2d& G = {0, 1},
                    const Eigen::MatrixXd& Q = Eigen::MatrixXd::Identity(2, 2)) {
  return make_phs(kQP, MatrixField::constant(rotation(), kQP), MatrixField::constant(R, kQP),
                  MatrixField::constant(G, kQP), Hamiltonian::quadratic(Q));
}

PhsModel integrator() {
  const std::vector<std::string> xi{"xi"};
  return make_phs(xi, MatrixField::zero(1, 1, xi), MatrixField::zero(1, 1, xi),
                  MatrixField::constant(Eigen::MatrixXd::Ones(1, 1), xi),
                  Hamiltonian::quadratic(Eigen::MatrixXd::Ones(1, 1)));
}

SignalSpec sine_input() { return SignalSpec::expressions({parse_expr("sin(t)", {"t"})}); }

// Linear IOH system whose data stay available to the oracles.
struct LinearIoh {
  Eigen::MatrixXd J, R, Q, D;
  IohModel model;
};

LinearIoh random_ioh(std::mt19937_64& rng, Eigen::Index n, Eigen::Index m, const std::string& stem) {
  LinearIoh s;
  s.J = random_skew(rng, n);
  s.R = random_psd(rng, n, static_cast<Eigen::Index>(rng() % (n + 1)));
  s.Q = random_spd(rng, n);
  s.D = uniform_matrix(rng, m, n);
  const auto names = state_names(n, stem);
  s.model = make_ioh(names, MatrixField::constant(s.J, names), MatrixField::constant(s.R, names),
                     Hamiltonian::quadratic(s.Q), testing_support::linear_outputs(s.D, names));
  return s;
}

// ---------------------------------------------------------------------------

Outcome dirac_axioms() {
  Outcome o;
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> size(1, 8);
  double worst_power = 0.0;
  int failures = 0;
  auto account = [&](const DiracReport& r, Eigen::Index k) {
    worst_power = std::max(worst_power, r.power_residual);
    if (!r.passed || r.rank != k || !(r.power_residual < 1e-10)) ++failures;
  };
  for (int i = 0; i < 200; ++i) {
    const int k = size(rng);
    account(verify_dirac(from_skew_map(random_skew(rng, k))), k);
  }
  for (int i = 0; i < 50; ++i) {
    const int k = size(rng);
    const int cols = std::uniform_int_distribution<int>(1, k)(rng);
    account(verify_dirac(from_kirchhoff(uniform_matrix(rng, k, cols))), k);
  }
  for (int i = 0; i < 100; ++i) {
    const int n1 = size(rng) % 4 + 1, s = size(rng) % 4 + 1, n3 = size(rng) % 4 + 1;
    const DiracStructure a = from_skew_map(random_skew(rng, n1 + s), {{"e1", n1}, {"s", s}});
    const DiracStructure b = from_skew_map(random_skew(rng, s + n3), {{"s", s}, {"e3", n3}});
    account(verify_dirac(phkit::compose(a, b, {{"s", "s"}})), n1 + n3);
  }
  o.require(failures == 0, "failing structures %.0f of 350", failures);
  o.require(worst_power < 1e-10, "max power residual %.2e", worst_power);
  return o;
}

double rk4_balance(double h) {
  const PhsModel m = oscillator(diag2(0, 0.1));
  return energy_audit(simulate_phs(m, sine_input(), Eigen::Vector2d(1, 0), 10.0, h, Method::kRk4), m)
      .balance_residual;
}

Outcome energy_balance() {
  Outcome o;
  const PhsModel m = oscillator(diag2(0, 0.1));
  const AuditReport a =
      energy_audit(simulate_phs(m, sine_input(), Eigen::Vector2d(1, 0), 10.0, 0.01, Method::kMidpoint), m);
  o.require(std::abs(a.balance_residual) <= 1e-8, "midpoint balance residual %.2e", std::abs(a.balance_residual));
  o.require(a.passivity_margin <= 1e-9, "passivity margin %.2e", a.passivity_margin);
  const double ratio = std::abs(rk4_balance(0.01) / rk4_balance(0.005));
  o.require(ratio >= 12.0 && ratio <= 20.0, "RK4 residual ratio h/(h/2) %.2f", ratio);
  return o;
}

Outcome structure_preservation() {
  Outcome o;
  std::mt19937_64 rng(303);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::Index n = 2 + trial;
    const auto names = state_names(n);
    const PhsModel m =
        make_phs(names, MatrixField::constant(random_skew(rng, n), names), MatrixField::zero(n, n, names),
                 MatrixField::zero(n, 1, names), Hamiltonian::quadratic(random_spd(rng, n)));
    const Trajectory tr =
        simulate_phs(m, SignalSpec::zero(1), uniform_vector(rng, n, -1, 1), 100.0, 0.01, Method::kMidpoint);
    if (tr.steps() != 10000) throw PreconditionError("unexpected step count");
    for (const double h : tr.H) worst = std::max(worst, std::abs(h - tr.H.front()));
  }
  o.require(worst <= 1e-9, "max |H drift| over 1e4 steps %.2e", worst);
  return o;
}

Outcome shifted_passivity() {
  Outcome o;
  const PhsModel m = oscillator(diag2(0, 0.1));
  const Eigen::VectorXd ubar = Eigen::VectorXd::Ones(1);
  const SteadyState ss = steady_state(m, ubar, Eigen::Vector2d::Zero());
  // Oracle: solve (J - R) Q x = -G u directly.
  const Eigen::Vector2d oracle = (rotation() - diag2(0, 0.1)).fullPivLu().solve(-Eigen::Vector2d(0, 1));
  o.require((ss.x_bar - oracle).norm() <= 1e-12 && (ss.x_bar - Eigen::Vector2d(1, 0)).norm() <= 1e-12,
            "|x_bar - (1,0)| %.2e", (ss.x_bar - Eigen::Vector2d(1, 0)).norm());

  const ShiftedSystem sh = shifted_system(m, ss);
  std::mt19937_64 rng(404);
  double lowest = 0.0;
  for (int k = 0; k < 2000; ++k) {
    const Eigen::VectorXd d = uniform_vector(rng, 2, -1, 1);
    if (d.norm() > 1.0) continue;
    const Eigen::VectorXd x = ss.x_bar + d;
    lowest = std::min(lowest, sh.energy.value(x));
  }
  o.require(lowest >= 0.0, "min shifted energy on ball %.2e", lowest);

  const InputLaw law = [&](double, const Eigen::VectorXd& x) {
    const Eigen::VectorXd y = phs_vector_field(m, x, Eigen::VectorXd::Zero(1)).y;
    return Eigen::VectorXd(ss.u_bar - 0.5 * (y - ss.y_bar));
  };
  const Trajectory tr = simulate_phs(m, law, Eigen::Vector2d(1.5, 0), 20.0, 0.01, Method::kMidpoint);
  const double err = (tr.x.back() - ss.x_bar).norm();
  o.require(err < 1e-3, "feedback |x(20) - x_bar| %.4e", err);
  return o;
}

Outcome casimir_suite() {
  Outcome o;
  std::mt19937_64 rng(505);
  double worst_residual = 0.0;
  int dimension_mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 2 + trial % 6;
    const auto names = state_names(n);
    const Eigen::MatrixXd B = uniform_matrix(rng, n, 1 + trial % n);
    const Eigen::MatrixXd J = B * random_skew(rng, B.cols()) * B.transpose();
    const Eigen::MatrixXd R = random_psd(rng, n, trial % 3);
    const PhsModel m =
        make_phs(names, MatrixField::constant(J, names), MatrixField::constant(R, names),
                 MatrixField::zero(n, 1, names), Hamiltonian::quadratic(Eigen::MatrixXd::Identity(n, n)));
    const CasimirBasis basis = linear_casimirs(m);
    Eigen::MatrixXd stacked(2 * n, n);
    stacked << J, R;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(stacked);
    lu.setThreshold(1e-10);
    if (static_cast<Eigen::Index>(basis.size()) != n - lu.rank()) ++dimension_mismatches;
    for (const auto& c : basis.covectors)
      worst_residual = std::max({worst_residual, (J * c).norm(), (R * c).norm()});
  }
  o.require(worst_residual <= 1e-10, "max(|Jc|,|Rc|) %.2e", worst_residual);
  o.require(dimension_mismatches == 0, "dimension mismatches vs n - rank %.0f", dimension_mismatches);

  double drift = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::Index n = 4;
    const auto names = state_names(n);
    const Eigen::MatrixXd B = uniform_matrix(rng, n, 2);
    const PhsModel m = make_phs(names, MatrixField::constant(B * random_skew(rng, 2) * B.transpose(), names),
                                MatrixField::constant(B * random_psd(rng, 2, 1) * B.transpose(), names),
                                MatrixField::zero(n, 1, names), Hamiltonian::quadratic(random_spd(rng, n)));
    const CasimirBasis basis = linear_casimirs(m);
    const Eigen::VectorXd x0 = uniform_vector(rng, n, -1, 1);
    const Trajectory tr = simulate_phs(m, SignalSpec::zero(1), x0, 100.0, 0.01, Method::kMidpoint);
    for (const auto& c : basis.covectors)
      for (const auto& x : tr.x) drift = std::max(drift, std::abs(c.dot(x - x0)));
  }
  o.require(drift <= 1e-8, "Casimir drift over 1e4 steps %.2e", drift);
  return o;
}

Outcome control_by_interconnection() {
  Outcome o;
  const CasimirSearchResult found = closedloop_casimir_search(oscillator(diag2(0, 0.1)), integrator());
  double dev = 1.0;
  if (found.casimirs.size() == 1) {
    const Eigen::Vector3d w = found.casimirs[0].covector();
    // Oracle: C = xi - q, up to scale.
    const Eigen::Vector3d expected = Eigen::Vector3d(-1, 0, 1) * (w(2) == 0.0 ? 1.0 : w(2));
    dev = (w - expected).norm();
  }
  o.require(dev <= 1e-12, "Casimir xi - q deviation %.2e", dev);

  const CasimirSearchResult blocked = closedloop_casimir_search(oscillator(diag2(0.5, 0)), integrator());
  o.require(blocked.casimirs.empty() && blocked.obstacle.obstacle, "obstacle flagged with %.0f Casimirs",
            static_cast<double>(blocked.casimirs.size()));

  const double qstar = 0.7;
  const PhsModel plant = oscillator(diag2(0, 0), {0, 1}, diag2(0, 1));
  const Eigen::MatrixXd F = Eigen::RowVector2d(1, 0);
  const Eigen::VectorXd lambda = Eigen::VectorXd::Constant(1, -qstar);
  const FeedbackLaw shaping = reduce_to_state_feedback(plant, integrator(), F, lambda);
  const ClosedLoopPhs cl = negative_feedback(plant, integrator());
  const Eigen::Vector2d x0(-0.4, 0.9);
  Eigen::Vector3d z0;
  z0 << x0, (F * x0 + lambda)(0);
  const Trajectory fb = simulate_phs(plant, shaping.as_input(), x0, 10.0, 0.01, Method::kMidpoint);
  const Trajectory full = simulate_phs(cl.model, SignalSpec::zero(2), z0, 10.0, 0.01, Method::kMidpoint);
  double match = 0.0;
  for (std::size_t k = 0; k < fb.x.size(); ++k) match = std::max(match, (fb.x[k] - full.x[k].head(2)).norm());
  o.require(match <= 1e-8 && fb.steps() == 1000, "reduction trajectory mismatch %.2e", match);

  const auto cand = energy_casimir_candidate(*shaping.shaped_model, std::vector<Expr>{}, parse_expr("z0", {"z0"}),
                                             Eigen::Vector2d(qstar, 0));
  const FeedbackLaw pd = combine(shaping, damping_injection(*shaping.shaped_model, cand.candidate, 1.0));
  const Trajectory run = simulate_phs(plant, pd.as_input(), Eigen::Vector2d(-1.0, 0.5), 30.0, 0.01, Method::kMidpoint);
  const double err = (run.x.back() - Eigen::Vector2d(qstar, 0)).norm();
  o.require(err < 1e-3, "PD |x(30) - (q*,0)| %.2e", err);
  return o;
}

Outcome ida_pbc() {
  Outcome o;
  const double kd = 3.0, r = 0.1;
  const PhsModel plant = oscillator(diag2(0, r));
  const Eigen::MatrixXd Qs = diag2(kd, 1);
  const IdaPbcResult res = ida_pbc_linear(plant, rotation(), diag2(0, r), Hamiltonian::quadratic(Qs));
  o.require(res.matching_residual <= 1e-12, "matching residual %.2e", res.matching_residual);

  std::mt19937_64 rng(707);
  double law_err = 0.0, field_err = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd x = uniform_vector(rng, 2, -2, 2);
    const Eigen::VectorXd u = res.law(x);
    law_err = std::max(law_err, std::abs(u(0) - (1 - kd) * x(0)));
    const Eigen::Vector2d closed = (rotation() - diag2(0, r)) * x + Eigen::Vector2d(0, 1) * u(0);
    const Eigen::Vector2d target = (rotation() - diag2(0, r)) * (Qs * x);
    field_err = std::max(field_err, (closed - target).norm());
  }
  o.require(law_err <= 1e-12, "|alpha - (1-k_d) q| %.2e", law_err);
  o.require(field_err <= 1e-10, "closed-loop field error %.2e", field_err);

  bool rejected = false;
  try {
    ida_pbc_linear(oscillator(diag2(0, r), {1, 0}), rotation(), diag2(0, r), Hamiltonian::quadratic(Qs));
  } catch (const MatchingError&) {
    rejected = true;
  }
  o.require(rejected, "G=[1;0] rejected %.0f", rejected ? 1.0 : 0.0);
  return o;
}

Outcome phs_ioh() {
  Outcome o;
  std::mt19937_64 rng(808);
  double round_trip = 0.0, output = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = 1 + trial % 5, m = 1 + (trial / 5) % n;
    const LinearIoh s = random_ioh(rng, n, m, "x");
    const ExtendedPhsModel ext = ioh_to_phs(s.model);
    const IohModel back = phs_to_ioh(ext, s.model.C);
    for (int k = 0; k < 5; ++k) {
      const Eigen::VectorXd x = uniform_vector(rng, n, -2, 2), u = uniform_vector(rng, m, -2, 2);
      round_trip = std::max({round_trip, linalg::max_abs(back.J.evaluate(x) - s.J),
                             linalg::max_abs(back.R.evaluate(x) - s.R),
                             std::abs(back.H.value(x) - 0.5 * x.dot(s.Q * x)),
                             (ioh_output(back, x) - s.D * x).norm()});
      // Oracle: ydot = D (J - R)(Q x - D^T u).
      const Eigen::VectorXd ydot = s.D * ((s.J - s.R) * (s.Q * x - s.D.transpose() * u));
      output = std::max(output, (extended_output(ext, x, u) - ydot).cwiseAbs().maxCoeff());
    }
  }
  o.require(round_trip <= 1e-12, "round-trip error %.2e", round_trip);
  o.require(output <= 1e-12, "|y_PH - ydot| %.2e", output);

  auto fd_error = [&](const IohModel& ioh, const Eigen::VectorXd& x0, double h) {
    const Trajectory tr = simulate_ioh(ioh, sine_input(), x0, 5.0, h, Method::kRk4);
    double worst = 0.0;
    for (std::size_t k = 1; k + 1 < tr.x.size(); ++k)
      worst = std::max(worst, ((tr.y[k + 1] - tr.y[k - 1]) / (2 * h) - tr.ydot[k]).cwiseAbs().maxCoeff());
    return worst;
  };
  double worst_order = 10.0;
  for (int trial = 0; trial < 5; ++trial) {
    const LinearIoh s = random_ioh(rng, 2 + trial % 3, 1, "x");
    const Eigen::VectorXd x0 = uniform_vector(rng, s.model.n(), -1, 1);
    const double e1 = fd_error(s.model, x0, 0.01), e2 = fd_error(s.model, x0, 0.005);
    worst_order = std::min(worst_order, std::log2(e1 / e2));
  }
  o.require(worst_order >= 1.8, "finite-difference order %.2f", worst_order);
  return o;
}

Outcome energy_port_shaping() {
  Outcome o;
  std::mt19937_64 rng(909);
  double h_err = 0.0, gp_err = 0.0, static_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index m = 1 + trial % 2;
    const LinearIoh a = random_ioh(rng, 2, m, "a"), b = random_ioh(rng, 3, m, "b");
    const IohModel pf = positive_feedback(a.model, b.model).model;
    const Eigen::VectorXd x = uniform_vector(rng, 5, -1, 1);
    const Eigen::VectorXd x1 = x.head(2), x2 = x.tail(3);
    const double oracle = 0.5 * x1.dot(a.Q * x1) + 0.5 * x2.dot(b.Q * x2) - (a.D * x1).dot(b.D * x2);
    h_err = std::max(h_err, std::abs(pf.H.value(x) - oracle));

    if (trial % 2 == 0) {
      std::vector<std::string> ys;
      for (Eigen::Index i = 0; i < 2 * m; ++i) ys.push_back("y" + std::to_string(i + 1));
      Expr P = Expr::constant(0.0, ys);
      for (Eigen::Index i = 0; i < m; ++i) P = P - Expr::variable(ys[i], ys) * Expr::variable(ys[m + i], ys);
      const IohModel gp = general_p_feedback(a.model, b.model, P).model;
      const Eigen::VectorXd v = uniform_vector(rng, 2 * m, -1, 1);
      gp_err = std::max({gp_err, (ioh_vector_field(gp, x, v).xdot - ioh_vector_field(pf, x, v).xdot).norm(),
                         std::abs(gp.H.value(x) - pf.H.value(x)),
                         (ioh_output(gp, x) - ioh_output(pf, x)).norm(),
                         linalg::max_abs(gp.J.evaluate(x) - pf.J.evaluate(x)),
                         linalg::max_abs(gp.R.evaluate(x) - pf.R.evaluate(x))});
    }
  }
  o.require(h_err <= 1e-12, "|H_cl - (H1+H2-C1^T C2)| %.2e", h_err);
  o.require(gp_err <= 1e-12, "general-P vs positive feedback %.2e", gp_err);

  const std::vector<std::string> y{"y"};
  const Expr P = parse_expr("0.25*y^2 + cos(y)", y);
  IohModel base = random_ioh(rng, 2, 1, "x").model;
  base.C = {parse_expr("sin(x1) + x2", base.state)};
  const IohModel shaped = static_energy_feedback(base, P);
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd x = uniform_vector(rng, 2, -1, 1), v = uniform_vector(rng, 1, -1, 1);
    const double yv = std::sin(x(0)) + x(1);
    const Eigen::VectorXd u = Eigen::VectorXd::Constant(1, -(0.5 * yv - std::sin(yv)) + v(0));
    static_err =
        std::max(static_err, (ioh_vector_field(shaped, x, v).xdot - ioh_vector_field(base, x, u).xdot).norm());
  }
  o.require(static_err <= 1e-10, "static feedback field identity %.2e", static_err);
  return o;
}

StabilityVerdict hessian_oracle(const LinearIoh& a, const LinearIoh& b) {
  const Eigen::Index n1 = a.Q.rows(), n2 = b.Q.rows();
  Eigen::MatrixXd H(n1 + n2, n1 + n2);
  H << a.Q, -a.D.transpose() * b.D, -b.D.transpose() * a.D, b.Q;
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H).eigenvalues();
  if (ev.minCoeff() > 1e-9) return StabilityVerdict::kStable;
  if (ev.minCoeff() < -1e-9) return StabilityVerdict::kUnstable;
  return StabilityVerdict::kMarginal;
}

LinearIoh spring(double k, const std::string& stem) {
  LinearIoh s;
  s.J = rotation();
  s.R = Eigen::MatrixXd::Zero(2, 2);
  s.Q = diag2(k, 1);
  s.D = Eigen::RowVector2d(1, 0);
  const auto names = state_names(2, stem);
  s.model = make_ioh(names, MatrixField::constant(s.J, names), MatrixField::constant(s.R, names),
                     Hamiltonian::quadratic(s.Q), testing_support::linear_outputs(s.D, names));
  return s;
}

Outcome dc_loop_gain() {
  Outcome o;
  std::mt19937_64 rng(1010);
  int disagreements = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index m = 1 + trial % 2;
    const LinearIoh a = random_ioh(rng, 2 + trial % 3, m, "a"), b = random_ioh(rng, 2, m, "b");
    const StabilityReport r = dc_loop_gain_stability(a.model, b.model);
    if (r.loop_verdict != hessian_oracle(a, b) || !r.agrees()) ++disagreements;
  }
  o.require(disagreements == 0, "random-pair disagreements %.0f of 200", disagreements);

  struct Case {
    double k1, k2;
    StabilityVerdict expected;
  };
  int family_errors = 0;
  for (const Case& c : {Case{2, 2, StabilityVerdict::kStable}, Case{0.5, 0.5, StabilityVerdict::kUnstable},
                        Case{1, 1, StabilityVerdict::kMarginal}, Case{4, 0.25, StabilityVerdict::kMarginal},
                        Case{3, 0.5, StabilityVerdict::kStable}, Case{0.9, 1, StabilityVerdict::kUnstable}}) {
    const StabilityReport r = dc_loop_gain_stability(spring(c.k1, "a").model, spring(c.k2, "b").model);
    if (r.verdict != c.expected || r.loop_verdict != c.expected) ++family_errors;
  }
  o.require(family_errors == 0, "two-spring family errors %.0f", family_errors);
  return o;
}

Outcome network_build() {
  Outcome o;
  MsdGraph g;
  g.nodes = {{"m1", 1.0}, {"m2", 1.0}};
  g.springs = {{"m1", "m2", 1.0}};
  g.dampers = {{"m1", "m2", 0.5}};
  g.actuated = {"m1"};
  const PhsModel m = build_msd(g);
  o.require(validate_phs(m).passed(), "validate_phs passed %.0f", validate_phs(m).passed() ? 1.0 : 0.0);

  const CasimirBasis basis = linear_casimirs(m);
  const Eigen::Vector3d momentum = Eigen::Vector3d(0, 1, 1).normalized();
  double projection_err = 1.0;
  if (!basis.covectors.empty()) {
    Eigen::MatrixXd B(3, static_cast<Eigen::Index>(basis.size()));
    for (std::size_t k = 0; k < basis.size(); ++k) B.col(static_cast<Eigen::Index>(k)) = basis.covectors[k];
    projection_err = (B * (B.transpose() * momentum) - momentum).norm();
  }
  o.require(projection_err <= 1e-10, "momentum outside Casimir span by %.2e", projection_err);

  const Trajectory tr = simulate_phs(m, SignalSpec::expressions({parse_expr("sin(2*t)", {"t"})}),
                                     Eigen::Vector3d(0.3, -0.2, 0.5), 10.0, 0.01, Method::kMidpoint);
  const AuditReport a = energy_audit(tr, m);
  o.require(a.passed && std::abs(a.balance_residual) <= 1e-8, "forced-run balance residual %.2e",
            std::abs(a.balance_residual));
  return o;
}

Outcome expression_layer() {
  Outcome o;
  std::mt19937_64 rng(1212);
  const std::vector<std::string> vars{"x", "y", "z"};
  double worst_rel = 0.0;
  int round_trip_failures = 0;
  for (int k = 0; k < 50; ++k) {
    const std::string src = testing_support::random_expression_source(rng, vars, 4);
    const Expr e = parse_expr(src, vars);
    const Eigen::VectorXd x = uniform_vector(rng, 3, -1, 1);
    const auto vg = e.eval_grad(x);
    for (int i = 0; i < 3; ++i) {
      const double fd = testing_support::central_difference(e, x, i, 1e-5);
      worst_rel = std::max(worst_rel, std::abs(vg.gradient(i) - fd) / (1.0 + std::abs(vg.gradient(i))));
    }
    const Expr again = parse_expr(e.to_string(), vars);
    if (!again.structurally_equal(e) || again.to_string() != e.to_string() || again.eval(x) != e.eval(x))
      ++round_trip_failures;
  }
  o.require(worst_rel < 1e-6, "max gradient relative error %.2e", worst_rel);
  o.require(round_trip_failures == 0, "round-trip failures %.0f of 50", round_trip_failures);
  return o;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "Dirac axioms", 5.0, dirac_axioms},
      {2, "energy balance", 2.0, energy_balance},
      {3, "structure preservation", 0.0, structure_preservation},
      {4, "shifted passivity", 0.0, shifted_passivity},
      {5, "Casimir suite", 0.0, casimir_suite},
      {6, "control by interconnection", 0.0, control_by_interconnection},
      {7, "IDA-PBC", 0.0, ida_pbc},
      {8, "PHS/IOH conversion", 0.0, phs_ioh},
      {9, "energy-port shaping", 0.0, energy_port_shaping},
      {10, "dc loop gain", 2.0, dc_loop_gain},
      {11, "network build", 0.0, network_build},
      {12, "expression layer", 0.0, expression_layer},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.body();
    } catch (const std::exception& e) {
      o.passed = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.time_limit > 0.0) o.require(secs < c.time_limit, "runtime limit %.0f s", c.time_limit);
    if (!o.passed) ++failed;
    std::printf("%s [%2d] %-28s %.3f s  %s\n", o.passed ? "PASS" : "FAIL", c.id, c.title, secs, o.detail.c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
