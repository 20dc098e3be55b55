#include "phkit/analysis.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "phkit/error.hpp"
#include "phkit/linalg.hpp"

namespace phkit {

namespace {

void require_constant(const PhsModel& model, const char* op) {
  if (!model.has_constant_structure())
    throw PreconditionError(std::string(op) + " requires constant J, R, G and no Rayleigh dissipation");
}

std::span<const double> as_point(const Eigen::VectorXd& x) { return {x.data(), static_cast<std::size_t>(x.size())}; }

Eigen::VectorXd gradient_of(const Expr& e, const Eigen::VectorXd& x) { return e.eval_grad(as_point(x)).gradient; }

std::vector<std::string> z_names(std::size_t k) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i <= k; ++i) names.push_back("z" + std::to_string(i));
  return names;
}

Definiteness classify_hessian(double min_eig) {
  if (min_eig > linalg::kRankTolerance) return Definiteness::kPositiveDefinite;
  if (min_eig >= -linalg::kRankTolerance) return Definiteness::kPositiveSemidefinite;
  return Definiteness::kIndefinite;
}

}  // namespace

SteadyState steady_state(const PhsModel& model, const Eigen::VectorXd& u_bar,
                         const Eigen::VectorXd& x_guess) {
  require_constant(model, "steady_state");
  if (u_bar.size() != model.m()) throw DimensionError("input size does not match the model");
  if (x_guess.size() != model.n()) throw DimensionError("state guess size does not match the model");
  const Eigen::MatrixXd A = model.J.constant_value() - model.R.constant_value();
  const Eigen::VectorXd Gu = model.G.constant_value() * u_bar;
  const double tol = kSteadyStateTolerance * (1.0 + Gu.norm());

  SteadyState ss;
  ss.u_bar = u_bar;
  std::optional<Hamiltonian::Quadratic> quad;
  if (model.H.is_quadratic()) {
    quad = model.H.quadratic_form();
  } else {
    quad = quadratic_coefficients(model.H.expr());
  }
  if (quad) {
    const Eigen::MatrixXd M = A * quad->Q;
    const Eigen::VectorXd rhs = -Gu - A * quad->b;
    ss.x_bar = x_guess + linalg::pseudo_inverse(M) * (rhs - M * x_guess);
    ss.closed_form = true;
    ss.residual = (A * (quad->Q * ss.x_bar + quad->b) + Gu).norm();
    if (!(ss.residual <= tol))
      throw SingularSystemError("no steady state: -G u_bar is not in the range of (J - R) Q (residual " +
                                format_number(ss.residual) + ")");
  } else {
    Eigen::VectorXd x = x_guess;
    constexpr int kMaxIterations = 100;
    bool done = false;
    try {
      for (int it = 0; it <= kMaxIterations; ++it) {
        const Eigen::VectorXd F = A * model.H.value_grad(x).gradient + Gu;
        ss.residual = F.norm();
        ss.newton_iterations = it;
        if (ss.residual <= tol) {
          done = true;
          break;
        }
        if (!std::isfinite(ss.residual)) break;
        const Eigen::MatrixXd jac = A * model.H.hessian(x);
        x -= jac.completeOrthogonalDecomposition().solve(F);
      }
    } catch (const DomainError& e) {
      throw ConvergenceError(std::string("steady-state Newton iteration left the domain: ") + e.what());
    }
    if (!done)
      throw ConvergenceError("steady-state Newton iteration did not converge (residual " +
                             format_number(ss.residual) + ")");
    ss.x_bar = x;
  }
  ss.y_bar = model.G.constant_value().transpose() * model.H.value_grad(ss.x_bar).gradient;
  return ss;
}

ShiftedHamiltonian::ShiftedHamiltonian(Hamiltonian base, Eigen::VectorXd x_bar)
    : base_(std::move(base)), x_bar_(std::move(x_bar)), at_shift_(base_.value_grad(x_bar_)) {}

double ShiftedHamiltonian::value(const Eigen::VectorXd& x) const {
  return base_.value(x) - at_shift_.gradient.dot(x - x_bar_) - at_shift_.value;
}

Eigen::VectorXd ShiftedHamiltonian::gradient(const Eigen::VectorXd& x) const {
  return base_.value_grad(x).gradient - at_shift_.gradient;
}

Hamiltonian ShiftedHamiltonian::as_hamiltonian(const std::vector<std::string>& state) const {
  const Eigen::VectorXd g = at_shift_.gradient;
  const double offset = g.dot(x_bar_) - at_shift_.value;
  if (base_.is_quadratic()) {
    const auto& q = base_.quadratic_form();
    const Eigen::VectorXd b = q.b.size() == 0 ? Eigen::VectorXd(-g) : Eigen::VectorXd(q.b - g);
    return Hamiltonian::quadratic(q.Q, b, q.c + offset);
  }
  Expr e = base_.to_expr(state);
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (g(static_cast<Eigen::Index>(i)) != 0.0)
      e = e - Expr::constant(g(static_cast<Eigen::Index>(i)), state) * Expr::variable(state[i], state);
  }
  if (offset != 0.0) e = e + Expr::constant(offset, state);
  return Hamiltonian::expression(e);
}

const char* to_string(Definiteness d) {
  switch (d) {
    case Definiteness::kPositiveDefinite:
      return "positive definite";
    case Definiteness::kPositiveSemidefinite:
      return "positive semidefinite";
    case Definiteness::kIndefinite:
      return "indefinite";
  }
  return "?";
}

ShiftedSystem shifted_system(const PhsModel& model, const SteadyState& steady, std::uint64_t seed) {
  require_constant(model, "shifted_system");
  if (steady.x_bar.size() != model.n() || steady.u_bar.size() != model.m())
    throw DimensionError("steady state does not match the model");
  ShiftedHamiltonian energy(model.H, steady.x_bar);
  PhsModel shifted = model;
  shifted.H = energy.as_hamiltonian(model.state);
  shifted.metadata["shifted"] = "true";

  double identity = 0.0;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (const auto& s : default_samples(model.n(), seed)) {
    const Eigen::VectorXd x = steady.x_bar + s;
    Eigen::VectorXd u(model.m());
    for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = steady.u_bar(i) + dist(rng);
    const PhsEval orig = phs_vector_field(model, x, u);
    const PhsEval shift = phs_vector_field(shifted, x, u - steady.u_bar);
    identity = std::max(identity, (orig.xdot - shift.xdot).lpNorm<Eigen::Infinity>());
    identity = std::max(identity, ((orig.y - steady.y_bar) - shift.y).lpNorm<Eigen::Infinity>());
  }

  const Eigen::MatrixXd hess = model.H.hessian(steady.x_bar);
  const double min_eig = linalg::min_symmetric_eigenvalue(hess);
  return ShiftedSystem{std::move(energy), std::move(shifted), steady, identity, hess, min_eig,
                       classify_hessian(min_eig)};
}

std::vector<Expr> CasimirBasis::as_expressions(const std::vector<std::string>& state) const {
  std::vector<Expr> out;
  for (const auto& c : covectors) {
    if (c.size() != static_cast<Eigen::Index>(state.size()))
      throw DimensionError("covector size does not match the state");
    Expr e = Expr::constant(0.0, state);
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      if (c(i) != 0.0) e = e + Expr::constant(c(i), state) * Expr::variable(state[i], state);
    }
    out.push_back(e);
  }
  return out;
}

CasimirBasis linear_casimirs(const PhsModel& model) {
  if (!model.J.is_constant() || !model.R.is_constant())
    throw PreconditionError("linear_casimirs requires constant J and R");
  const Eigen::MatrixXd J = model.J.constant_value();
  const Eigen::MatrixXd R = model.R.constant_value();
  Eigen::MatrixXd stacked(2 * model.n(), model.n());
  stacked << J, R;
  if (model.rayleigh) {
    if (!model.rayleigh->GR.is_constant())
      throw PreconditionError("linear_casimirs requires a constant Rayleigh port matrix");
    const Eigen::MatrixXd GRt = model.rayleigh->GR.constant_value().transpose();
    Eigen::MatrixXd with_port(stacked.rows() + GRt.rows(), model.n());
    with_port << stacked, GRt;
    stacked = with_port;
  }
  const Eigen::MatrixXd basis = model.n() == 0 ? Eigen::MatrixXd(0, 0) : linalg::null_space(stacked);
  CasimirBasis out;
  for (Eigen::Index k = 0; k < basis.cols(); ++k) {
    Eigen::VectorXd c = basis.col(k);
    // Sign convention: first significant entry positive.
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      if (std::abs(c(i)) > 1e-12) {
        if (c(i) < 0) c = -c;
        break;
      }
    }
    out.j_residuals.push_back((J * c).norm());
    out.r_residuals.push_back((R * c).norm());
    out.covectors.push_back(c);
  }
  return out;
}

CasimirReport verify_casimir(const PhsModel& model, const Expr& C, std::span<const Eigen::VectorXd> samples,
                             const Trajectory* trajectory) {
  const Expr c = C.rebind(model.state);
  CasimirReport rep;
  for (const auto& x : samples) {
    if (x.size() != model.n()) throw DimensionError("sample size does not match the model");
    const Eigen::VectorXd g = gradient_of(c, x);
    rep.j_residual = std::max(rep.j_residual, (model.J.evaluate(x) * g).norm());
    double r = (model.R.evaluate(x) * g).norm();
    if (model.rayleigh) r = std::max(r, (model.rayleigh->GR.evaluate(x).transpose() * g).norm());
    rep.r_residual = std::max(rep.r_residual, r);
  }
  if (trajectory != nullptr && !trajectory->x.empty()) {
    const double change = c.eval(as_point(trajectory->x.back())) - c.eval(as_point(trajectory->x.front()));
    const double supplied = trajectory_integral(*trajectory, [&](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
      return gradient_of(c, x).dot(model.G.evaluate(x) * u);
    });
    rep.trajectory_residual = std::abs(change - supplied);
  }
  rep.passed = rep.j_residual <= rep.tolerance && rep.r_residual <= rep.tolerance;
  return rep;
}

double LyapunovCandidate::value(const Eigen::VectorXd& x) const { return V.eval(as_point(x)); }

Eigen::VectorXd LyapunovCandidate::gradient(const Eigen::VectorXd& x) const { return gradient_of(V, x); }

double LyapunovCandidate::dphi_dz0(const Eigen::VectorXd& x) const {
  std::vector<double> z{H.value(x)};
  for (const auto& c : casimirs) z.push_back(c.eval(as_point(x)));
  return phi.eval_grad(std::span<const double>(z)).gradient(0);
}

EnergyCasimirResult energy_casimir_candidate(const PhsModel& model, const std::vector<Expr>& casimirs,
                                             const Expr& phi, const Eigen::VectorXd& target,
                                             std::uint64_t seed) {
  if (target.size() != model.n()) throw DimensionError("target size does not match the model");
  LyapunovCandidate cand;
  cand.state = model.state;
  cand.H = model.H;
  cand.target = target;
  cand.phi = phi.rebind(z_names(casimirs.size()));
  const auto samples = default_samples(model.n(), seed);
  std::vector<Expr> parts{model.H.to_expr(model.state)};
  for (std::size_t i = 0; i < casimirs.size(); ++i) {
    const Expr c = casimirs[i].rebind(model.state);
    const CasimirReport rep = verify_casimir(model, c, samples);
    if (!rep.passed)
      throw PreconditionError("Casimir z" + std::to_string(i + 1) + " is not certified (residual " +
                              format_number(std::max(rep.j_residual, rep.r_residual)) + ")");
    cand.casimirs.push_back(c);
    parts.push_back(c);
  }
  cand.V = cand.phi.substitute(parts);

  MinimumReport rep;
  rep.dphi_dz0 = cand.dphi_dz0(target);
  if (!(rep.dphi_dz0 > 0.0))
    throw PreconditionError("dPhi/dz0 = " + format_number(rep.dphi_dz0) + " at the target; it must be positive");

  const Eigen::Index n = model.n();
  Eigen::VectorXd grad(n);
  Eigen::MatrixXd hess(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd xp = target, xm = target;
    xp(i) += kCandidateStep;
    xm(i) -= kCandidateStep;
    grad(i) = (cand.value(xp) - cand.value(xm)) / (2.0 * kCandidateStep);
    hess.col(i) = (cand.gradient(xp) - cand.gradient(xm)) / (2.0 * kCandidateStep);
  }
  rep.gradient_norm = grad.norm();
  rep.min_hessian_eigenvalue = linalg::min_symmetric_eigenvalue(0.5 * (hess + hess.transpose()));

  // Decrease condition: rate of V along the unforced field near the target,
  // and the discrete change along short unforced runs.
  double max_rate = -std::numeric_limits<double>::infinity();
  const Eigen::VectorXd zero_u = Eigen::VectorXd::Zero(model.m());
  for (const auto& s : samples) {
    const Eigen::VectorXd x = target + 0.5 * s;
    max_rate = std::max(max_rate, cand.gradient(x).dot(phs_vector_field(model, x, zero_u).xdot));
  }
  rep.max_increase = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < std::min<std::size_t>(samples.size(), 4); ++k) {
    const Trajectory run =
        simulate_phs(model, SignalSpec::zero(model.m()), target + 0.1 * samples[k], 2.0, 0.01, Method::kMidpoint);
    rep.max_increase = std::max(rep.max_increase, audit_lyapunov(cand, run).max_increase);
  }

  if (rep.gradient_norm > kCandidateGradientTolerance) {
    rep.reason = "gradient of V at the target is " + format_number(rep.gradient_norm);
  } else if (rep.min_hessian_eigenvalue < kCandidateHessianTolerance) {
    rep.reason = "Hessian of V at the target has eigenvalue " + format_number(rep.min_hessian_eigenvalue);
  } else if (max_rate > kLyapunovTolerance) {
    rep.reason = "V increases along the unforced field (rate " + format_number(max_rate) + ")";
  } else {
    rep.accepted = true;
    rep.reason = "strict minimum at the target";
  }
  cand.accepted = rep.accepted;
  return {std::move(cand), std::move(rep)};
}

EnergyCasimirResult energy_casimir_candidate(const PhsModel& model, const CasimirBasis& basis, const Expr& phi,
                                             const Eigen::VectorXd& target, std::uint64_t seed) {
  return energy_casimir_candidate(model, basis.as_expressions(model.state), phi, target, seed);
}

LyapunovAudit audit_lyapunov(const LyapunovCandidate& candidate, const Trajectory& traj) {
  LyapunovAudit audit;
  audit.max_increase = -std::numeric_limits<double>::infinity();
  audit.min_dphi_dz0 = std::numeric_limits<double>::infinity();
  double prev = 0.0;
  for (std::size_t k = 0; k < traj.x.size(); ++k) {
    const double v = candidate.value(traj.x[k]);
    if (k > 0) audit.max_increase = std::max(audit.max_increase, v - prev);
    prev = v;
    audit.min_dphi_dz0 = std::min(audit.min_dphi_dz0, candidate.dphi_dz0(traj.x[k]));
  }
  if (traj.x.size() < 2) audit.max_increase = 0.0;
  audit.passed = audit.max_increase <= kLyapunovTolerance && audit.min_dphi_dz0 > 0.0;
  return audit;
}

}  // namespace phkit
