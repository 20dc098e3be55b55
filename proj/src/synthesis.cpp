#include "phkit/synthesis.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "phkit/linalg.hpp"

namespace phkit {

namespace {

std::string model_id(const PhsModel& m, const char* fallback) {
  const auto it = m.metadata.find("name");
  return it == m.metadata.end() ? fallback : it->second;
}

Eigen::VectorXd offset_or_zero(const Hamiltonian::Quadratic& q) {
  return q.b.size() == 0 ? Eigen::VectorXd(Eigen::VectorXd::Zero(q.Q.rows())) : q.b;
}

std::optional<Hamiltonian::Quadratic> as_quadratic(const Hamiltonian& h) {
  if (h.is_quadratic()) return h.quadratic_form();
  return quadratic_coefficients(h.expr());
}

Hamiltonian product_hamiltonian(const PhsModel& a, const PhsModel& b, const ProductState& ps) {
  const auto qa = as_quadratic(a.H);
  const auto qb = as_quadratic(b.H);
  if (qa && qb) {
    Eigen::VectorXd bv(a.n() + b.n());
    bv << offset_or_zero(*qa), offset_or_zero(*qb);
    return Hamiltonian::quadratic(linalg::block_diagonal(qa->Q, qb->Q), bv, qa->c + qb->c);
  }
  return Hamiltonian::expression(embed_in_product(a.H.to_expr(a.state), ps.embed_a, ps.names) +
                                 embed_in_product(b.H.to_expr(b.state), ps.embed_b, ps.names));
}

std::string matrix_text(const Eigen::MatrixXd& m) {
  std::string out = "[";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out += i == 0 ? "[" : ", [";
    for (Eigen::Index j = 0; j < m.cols(); ++j) out += (j == 0 ? "" : ", ") + format_number(m(i, j));
    out += "]";
  }
  return out + "]";
}

void require_constant(const PhsModel& m, const char* what) {
  if (!m.has_constant_structure())
    throw PreconditionError(std::string(what) + " requires constant J, R, G and no Rayleigh dissipation");
}

}  // namespace

ClosedLoopPhs interconnect_jint(const PhsModel& sys1, const PhsModel& sys2, const MatrixField& J_int) {
  if (sys1.rayleigh || sys2.rayleigh) throw PreconditionError("interconnection of Rayleigh models is not supported");
  const Eigen::Index m = sys1.m() + sys2.m();
  if (J_int.rows() != m || J_int.cols() != m)
    throw DimensionError("J_int must be " + std::to_string(m) + " x " + std::to_string(m));
  const ProductState ps = product_state(sys1.state, sys2.state);
  const MatrixField Jint = J_int.is_constant() ? MatrixField::constant(J_int.constant_value(), ps.names)
                                               : J_int.rebind(ps.names);
  double skew = 0.0;
  for (const auto& x : default_samples(static_cast<Eigen::Index>(ps.names.size())))
    skew = std::max(skew, linalg::skew_violation(Jint.evaluate(x)));
  if (skew > kSynthesisTolerance) throw PreconditionError("J_int is not skew-symmetric (violation " +
                                                          format_number(skew) + ")");

  const MatrixField G = MatrixField::block_diagonal(embed_in_product(sys1.G, ps.embed_a, ps.names),
                                                    embed_in_product(sys2.G, ps.embed_b, ps.names));
  const MatrixField J = MatrixField::block_diagonal(embed_in_product(sys1.J, ps.embed_a, ps.names),
                                                    embed_in_product(sys2.J, ps.embed_b, ps.names)) +
                        G * Jint * G.transpose();
  const MatrixField R = MatrixField::block_diagonal(embed_in_product(sys1.R, ps.embed_a, ps.names),
                                                    embed_in_product(sys2.R, ps.embed_b, ps.names));
  ClosedLoopPhs cl;
  cl.model = make_phs(ps.names, J, R, G, product_hamiltonian(sys1, sys2, ps));
  cl.plant_id = model_id(sys1, "plant");
  cl.controller_id = model_id(sys2, "controller");
  cl.kind = "j-int";
  cl.n_plant = sys1.n();
  cl.n_controller = sys2.n();
  cl.model.metadata["interconnection"] = cl.kind;
  return cl;
}

ClosedLoopPhs negative_feedback(const PhsModel& plant, const PhsModel& controller) {
  if (plant.m() != controller.m())
    throw DimensionError("plant has " + std::to_string(plant.m()) + " ports, controller " +
                         std::to_string(controller.m()));
  const Eigen::Index m = plant.m();
  Eigen::MatrixXd Jint = Eigen::MatrixXd::Zero(2 * m, 2 * m);
  Jint.topRightCorner(m, m) = -Eigen::MatrixXd::Identity(m, m);
  Jint.bottomLeftCorner(m, m) = Eigen::MatrixXd::Identity(m, m);
  ClosedLoopPhs cl = interconnect_jint(plant, controller, MatrixField::constant(Jint, {}));
  cl.kind = "negative-feedback";
  cl.model.metadata["interconnection"] = cl.kind;
  cl.model.metadata["convention"] = "u = -y_c + v, u_c = y + v_c";
  return cl;
}

Eigen::VectorXd ClosedLoopCasimir::covector() const {
  Eigen::VectorXd w(F_row.size() + 1);
  w << -F_row, 1.0;
  return w;
}

std::optional<Eigen::MatrixXd> CasimirSearchResult::F() const {
  if (static_cast<Eigen::Index>(casimirs.size()) != closed_loop.n_controller) return std::nullopt;
  Eigen::MatrixXd f(closed_loop.n_controller, closed_loop.n_plant);
  for (const auto& c : casimirs) f.row(c.index) = c.F_row.transpose();
  return f;
}

namespace {

// Vector w in span(N) with w restricted to the controller block equal to
// e_i, minimum norm; nullopt when none exists.
std::optional<Eigen::VectorXd> solve_in_span(const Eigen::MatrixXd& N, Eigen::Index nc, Eigen::Index i) {
  if (N.cols() == 0) return std::nullopt;
  const Eigen::MatrixXd Nxi = N.bottomRows(nc);
  const Eigen::VectorXd e = Eigen::VectorXd::Unit(nc, i);
  const Eigen::VectorXd a = linalg::pseudo_inverse(Nxi) * e;
  if ((Nxi * a - e).norm() > kSynthesisTolerance) return std::nullopt;
  Eigen::VectorXd w = N * a;
  w.tail(nc) = e;
  return w;
}

}  // namespace

CasimirSearchResult closedloop_casimir_search(const PhsModel& plant, const PhsModel& controller) {
  require_constant(plant, "Casimir search");
  require_constant(controller, "Casimir search");
  CasimirSearchResult res;
  res.closed_loop = negative_feedback(plant, controller);
  const Eigen::Index n = plant.n();
  const Eigen::Index nc = controller.n();
  const Eigen::MatrixXd J = res.closed_loop.model.J.constant_value();
  const Eigen::MatrixXd R = res.closed_loop.model.R.constant_value();
  Eigen::MatrixXd stacked(2 * (n + nc), n + nc);
  stacked << J, R;
  const Eigen::MatrixXd N = linalg::null_space(stacked);
  const Eigen::MatrixXd NJ = linalg::null_space(J);

  std::vector<std::string> blocked;
  for (Eigen::Index i = 0; i < nc; ++i) {
    if (const auto w = solve_in_span(N, nc, i)) {
      ClosedLoopCasimir c;
      c.index = i;
      c.F_row = -w->head(n);
      c.j_residual = (J * *w).norm();
      c.r_residual = (R * *w).norm();
      res.casimirs.push_back(std::move(c));
      res.obstacle.r_residuals.push_back(0.0);
    } else if (const auto wj = solve_in_span(NJ, nc, i)) {
      const double r = (R * *wj).norm();
      res.obstacle.r_residuals.push_back(r);
      res.obstacle.obstacle = true;
      blocked.push_back(res.closed_loop.model.state[static_cast<std::size_t>(n + i)] + " (residual " +
                        format_number(r) + ")");
    } else {
      res.obstacle.r_residuals.push_back(std::nullopt);
    }
  }
  if (res.obstacle.obstacle) {
    res.obstacle.detail = "dissipation obstacle: R-condition violated for";
    for (std::size_t k = 0; k < blocked.size(); ++k) res.obstacle.detail += (k == 0 ? " " : ", ") + blocked[k];
  } else if (static_cast<Eigen::Index>(res.casimirs.size()) == nc) {
    res.obstacle.detail = "no obstacle";
  } else {
    res.obstacle.detail = "no Casimir of the form xi - F x for some controller states";
  }
  return res;
}

const char* to_string(FeedbackKind k) {
  return k == FeedbackKind::kStateFeedback ? "state-feedback" : "output-damping";
}

InputLaw FeedbackLaw::as_input() const {
  auto f = law;
  return [f](double, const Eigen::VectorXd& x) { return f(x); };
}

FeedbackLaw combine(const FeedbackLaw& a, const FeedbackLaw& b) {
  FeedbackLaw out = a;
  auto fa = a.law;
  auto fb = b.law;
  out.law = [fa, fb](const Eigen::VectorXd& x) { return Eigen::VectorXd(fa(x) + fb(x)); };
  if (a.gain && b.gain && a.offset && b.offset) {
    out.gain = *a.gain + *b.gain;
    out.offset = *a.offset + *b.offset;
  } else {
    out.gain.reset();
    out.offset.reset();
  }
  return out;
}

FeedbackLaw reduce_to_state_feedback(const PhsModel& plant, const PhsModel& controller, const Eigen::MatrixXd& F,
                                     const Eigen::VectorXd& lambda) {
  require_constant(plant, "state-feedback reduction");
  require_constant(controller, "state-feedback reduction");
  const Eigen::Index n = plant.n();
  const Eigen::Index nc = controller.n();
  if (F.rows() != nc || F.cols() != n || lambda.size() != nc)
    throw DimensionError("F must be " + std::to_string(nc) + " x " + std::to_string(n) + " and lambda of size " +
                         std::to_string(nc));
  const ClosedLoopPhs cl = negative_feedback(plant, controller);
  const Eigen::MatrixXd Jcl = cl.model.J.constant_value();
  const Eigen::MatrixXd Rcl = cl.model.R.constant_value();
  for (Eigen::Index i = 0; i < nc; ++i) {
    Eigen::VectorXd w(n + nc);
    w << -F.row(i).transpose(), Eigen::VectorXd::Unit(nc, i);
    const double r = std::max((Jcl * w).norm(), (Rcl * w).norm());
    if (r > kSynthesisTolerance * (1.0 + w.norm()))
      throw PreconditionError("row " + std::to_string(i) + " of F does not define a closed-loop Casimir (residual " +
                              format_number(r) + ")");
  }

  const Eigen::MatrixXd Gc = controller.G.constant_value();
  const Hamiltonian Hc = controller.H;
  FeedbackLaw out;
  out.kind = FeedbackKind::kStateFeedback;
  out.law = [Gc, Hc, F, lambda](const Eigen::VectorXd& x) {
    return Eigen::VectorXd(-Gc.transpose() * Hc.value_grad(F * x + lambda).gradient);
  };

  const auto qp = as_quadratic(plant.H);
  const auto qc = as_quadratic(controller.H);
  if (qc) {
    const Eigen::VectorXd bc = offset_or_zero(*qc);
    out.gain = -Gc.transpose() * qc->Q * F;
    out.offset = -Gc.transpose() * (qc->Q * lambda + bc);
  }
  if (qp && qc) {
    const Eigen::VectorXd bc = offset_or_zero(*qc);
    out.shaped = Hamiltonian::quadratic(qp->Q + F.transpose() * qc->Q * F,
                                        offset_or_zero(*qp) + F.transpose() * (qc->Q * lambda + bc),
                                        qp->c + 0.5 * lambda.dot(qc->Q * lambda) + bc.dot(lambda) + qc->c);
  } else {
    std::vector<Expr> xi;
    for (Eigen::Index i = 0; i < nc; ++i) {
      Expr e = Expr::constant(lambda(i), plant.state);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (F(i, j) != 0.0)
          e = e + Expr::constant(F(i, j), plant.state) * Expr::variable(plant.state[static_cast<std::size_t>(j)],
                                                                       plant.state);
      }
      xi.push_back(e);
    }
    out.shaped = hamiltonian_from_expr(plant.H.to_expr(plant.state) +
                                       controller.H.to_expr(controller.state).substitute(xi));
  }
  PhsModel shaped = plant;
  shaped.H = *out.shaped;
  shaped.metadata["shaped"] = "state-feedback";
  for (const auto& x : default_samples(n)) {
    const Eigen::VectorXd with_law = phs_vector_field(plant, x, out.law(x)).xdot;
    const Eigen::VectorXd target = phs_vector_field(shaped, x, Eigen::VectorXd::Zero(plant.m())).xdot;
    out.identity_residual = std::max(out.identity_residual, (with_law - target).lpNorm<Eigen::Infinity>());
  }
  out.shaped_model = std::move(shaped);
  return out;
}

FeedbackLaw damping_injection(const PhsModel& model, const LyapunovCandidate& V, double c) {
  if (!V.accepted) throw PreconditionError("damping injection needs an accepted Lyapunov candidate");
  if (!(c >= 0.0)) throw PreconditionError("damping gain must be non-negative");
  if (V.state != model.state) throw DimensionError("candidate and model state differ");
  FeedbackLaw out;
  out.kind = FeedbackKind::kOutputDamping;
  const MatrixField G = model.G;
  const LyapunovCandidate cand = V;
  out.law = [G, cand, c](const Eigen::VectorXd& x) {
    return Eigen::VectorXd(-c * G.evaluate(x).transpose() * cand.gradient(x));
  };
  if (G.is_constant()) {
    if (const auto q = quadratic_coefficients(V.V)) {
      const Eigen::MatrixXd Gt = G.constant_value().transpose();
      out.gain = -c * Gt * q->Q;
      out.offset = -c * Gt * offset_or_zero(*q);
    }
  }
  return out;
}

ConvergenceAudit audit_convergence(const PhsModel& model, const FeedbackLaw& law, const LyapunovCandidate& V,
                                   const Eigen::VectorXd& x0, double T, double h) {
  const Trajectory tr = simulate_phs(model, law.as_input(), x0, T, h, Method::kMidpoint);
  ConvergenceAudit a;
  a.max_increase = audit_lyapunov(V, tr).max_increase;
  a.final_error = (tr.x.back() - V.target).norm();
  a.converged = a.final_error < a.tolerance && a.max_increase <= kLyapunovTolerance;
  return a;
}

MatchingError::MatchingError(double residual, Eigen::MatrixXd residual_matrix)
    : CheckFailure("matching equation", residual, "G-perp residual " + matrix_text(residual_matrix)),
      residual_matrix_(std::move(residual_matrix)) {}

IdaPbcResult ida_pbc_linear(const PhsModel& plant, const Eigen::MatrixXd& J_d, const Eigen::MatrixXd& R_d,
                            const Hamiltonian& H_s, std::uint64_t seed) {
  require_constant(plant, "IDA-PBC");
  const Eigen::Index n = plant.n();
  if (J_d.rows() != n || J_d.cols() != n || R_d.rows() != n || R_d.cols() != n)
    throw DimensionError("J_d and R_d must be " + std::to_string(n) + " x " + std::to_string(n));
  if (linalg::skew_violation(J_d) > kSynthesisTolerance) throw PreconditionError("J_d is not skew-symmetric");
  if (linalg::symmetry_violation(R_d) > kSynthesisTolerance ||
      linalg::min_symmetric_eigenvalue(R_d) < -kSynthesisTolerance)
    throw PreconditionError("R_d is not symmetric positive semidefinite");
  const auto q = as_quadratic(plant.H);
  const auto qs = as_quadratic(H_s);
  if (!q || !qs) throw PreconditionError("IDA-PBC needs quadratic plant and target energies");
  if (qs->Q.rows() != n) throw DimensionError("target energy dimension mismatch");
  const Eigen::MatrixXd G = plant.G.constant_value();
  if (linalg::rank(G) != G.cols()) throw PreconditionError("G does not have full column rank");

  const Eigen::MatrixXd A = plant.J.constant_value() - plant.R.constant_value();
  const Eigen::MatrixXd Ad = J_d - R_d;
  Eigen::MatrixXd plant_aff(n, n + 1), target_aff(n, n + 1);
  plant_aff << A * q->Q, A * offset_or_zero(*q);
  target_aff << Ad * qs->Q, Ad * offset_or_zero(*qs);

  IdaPbcResult res;
  res.annihilator = linalg::left_annihilator(G);
  res.residual_matrix = res.annihilator * (plant_aff - target_aff);
  res.matching_residual = res.residual_matrix.size() == 0 ? 0.0 : linalg::max_abs(res.residual_matrix);
  if (res.matching_residual > kSynthesisTolerance) throw MatchingError(res.matching_residual, res.residual_matrix);

  const Eigen::MatrixXd Gp = linalg::pseudo_inverse(G);
  const Eigen::MatrixXd coeff = Gp * (target_aff - plant_aff);
  const Eigen::MatrixXd K = coeff.leftCols(n);
  const Eigen::VectorXd k0 = coeff.col(n);
  res.law.kind = FeedbackKind::kStateFeedback;
  res.law.gain = K;
  res.law.offset = k0;
  res.law.law = [K, k0](const Eigen::VectorXd& x) { return Eigen::VectorXd(K * x + k0); };
  res.law.shaped = H_s;

  PhsModel target = plant;
  target.J = MatrixField::constant(J_d, plant.state);
  target.R = MatrixField::constant(R_d, plant.state);
  target.H = H_s;
  target.metadata["shaped"] = "ida-pbc";

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i) x(i) = dist(rng);
    const Eigen::VectorXd closed = phs_vector_field(plant, x, res.law(x)).xdot;
    const Eigen::VectorXd assigned = phs_vector_field(target, x, Eigen::VectorXd::Zero(plant.m())).xdot;
    res.field_residual = std::max(res.field_residual, (closed - assigned).lpNorm<Eigen::Infinity>());
  }
  res.law.identity_residual = res.field_residual;
  res.law.shaped_model = std::move(target);
  return res;
}

double alternate_output_margin(const ExtendedPhsModel& model, const Trajectory& traj) {
  double margin = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < traj.x.size(); ++k) {
    const Eigen::VectorXd& x = traj.x[k];
    const Eigen::VectorXd& u = traj.u.at(k);
    const Eigen::VectorXd grad = model.base.H.value_grad(x).gradient;
    const double hdot = grad.dot(phs_vector_field(model.base, x, u).xdot);
    margin = std::max(margin, hdot - u.dot(extended_output(model, x, u)));
  }
  return margin;
}

}  // namespace phkit
