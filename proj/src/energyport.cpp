#include "phkit/energyport.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "phkit/error.hpp"
#include "phkit/linalg.hpp"

namespace phkit {
namespace {

PhsModel structure_view(const IohModel& ioh) {
  PhsModel view;
  view.state = ioh.state;
  view.J = ioh.J;
  view.R = ioh.R;
  view.G = MatrixField::zero(ioh.n(), ioh.m(), ioh.state);
  view.H = ioh.H;
  return view;
}

Expr hamiltonian_expr(const IohModel& ioh, const std::vector<Expr>& vars,
                      const std::vector<std::string>& names) {
  return embed_in_product(ioh.H.to_expr(ioh.state), vars, names);
}

IohModel product_model(const IohModel& a, const IohModel& b, const ProductState& ps, Expr H) {
  std::vector<Expr> C;
  for (const auto& c : a.C) C.push_back(embed_in_product(c, ps.embed_a, ps.names));
  for (const auto& c : b.C) C.push_back(embed_in_product(c, ps.embed_b, ps.names));
  return make_ioh(ps.names,
                  MatrixField::block_diagonal(embed_in_product(a.J, ps.embed_a, ps.names),
                                              embed_in_product(b.J, ps.embed_b, ps.names)),
                  MatrixField::block_diagonal(embed_in_product(a.R, ps.embed_a, ps.names),
                                              embed_in_product(b.R, ps.embed_b, ps.names)),
                  hamiltonian_from_expr(H), std::move(C));
}

double spectral_radius(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::EigenSolver<Eigen::MatrixXd>(m, false).eigenvalues().cwiseAbs().maxCoeff();
}

StabilityVerdict classify(double margin) {
  if (margin > kMarginalTolerance) return StabilityVerdict::kStable;
  if (margin < -kMarginalTolerance) return StabilityVerdict::kUnstable;
  return StabilityVerdict::kMarginal;
}

struct LinearComponent {
  Eigen::MatrixXd Q;
  Eigen::MatrixXd D;
};

LinearComponent linear_component(const IohModel& ioh, const char* label) {
  const Hamiltonian H = ioh.H.is_quadratic() ? ioh.H : hamiltonian_from_expr(ioh.H.expr());
  if (!H.is_quadratic())
    throw PreconditionError(std::string(label) + ": Hamiltonian is not quadratic");
  const auto affine = affine_output(ioh);
  if (!affine) throw PreconditionError(std::string(label) + ": output map is not linear");
  if (affine->second.cwiseAbs().maxCoeff() > 0.0)
    throw PreconditionError(std::string(label) + ": output map has a constant offset");
  const Eigen::MatrixXd& Q = H.quadratic_form().Q;
  if (linalg::min_symmetric_eigenvalue(Q) <= 0.0)
    throw PreconditionError(std::string(label) + ": Hessian of H is not positive definite");
  return {Q, affine->first};
}

}  // namespace

IohModel make_ioh(std::vector<std::string> state, MatrixField J, MatrixField R, Hamiltonian H,
                  std::vector<Expr> C) {
  IohModel ioh;
  ioh.state = std::move(state);
  const auto n = ioh.n();
  ioh.J = J.is_constant() ? J.rebind(ioh.state) : std::move(J);
  ioh.R = R.is_constant() ? R.rebind(ioh.state) : std::move(R);
  ioh.H = std::move(H);
  for (auto& c : C) {
    if (c.is_constant())
      ioh.C.push_back(Expr::constant(c.eval(Eigen::VectorXd::Zero(c.arity())), ioh.state));
    else if (c.variables() != ioh.state)
      ioh.C.push_back(c.rebind(ioh.state));
    else
      ioh.C.push_back(std::move(c));
  }
  if (ioh.J.rows() != n || ioh.J.cols() != n || ioh.R.rows() != n || ioh.R.cols() != n)
    throw DimensionError("J and R must be " + std::to_string(n) + "x" + std::to_string(n));
  if (ioh.H.dimension() != n) throw DimensionError("Hamiltonian dimension mismatch");
  if (!ioh.H.is_quadratic() && ioh.H.expr().variables() != ioh.state)
    ioh.H = Hamiltonian::expression(ioh.H.expr().rebind(ioh.state));
  for (const MatrixField* f : {&ioh.J, &ioh.R})
    if (!f->is_constant() && f->variables() != ioh.state)
      throw DimensionError("matrix entries are not over the state names");
  return ioh;
}

Eigen::VectorXd ioh_output(const IohModel& ioh, const Eigen::VectorXd& x) {
  if (x.size() != ioh.n()) throw DimensionError("state dimension mismatch");
  Eigen::VectorXd y(ioh.m());
  for (Eigen::Index i = 0; i < ioh.m(); ++i) y(i) = ioh.C[i].eval(x);
  return y;
}

Eigen::MatrixXd output_jacobian(const IohModel& ioh, const Eigen::VectorXd& x) {
  if (x.size() != ioh.n()) throw DimensionError("state dimension mismatch");
  Eigen::MatrixXd D(ioh.m(), ioh.n());
  for (Eigen::Index i = 0; i < ioh.m(); ++i) D.row(i) = ioh.C[i].eval_grad(x).gradient.transpose();
  return D;
}

MatrixField output_jacobian_field(const IohModel& ioh) {
  MatrixField D(ioh.m(), ioh.n(), ioh.state);
  for (Eigen::Index i = 0; i < ioh.m(); ++i)
    for (Eigen::Index j = 0; j < ioh.n(); ++j)
      D.set(i, j, ioh.C[i].derivative(static_cast<std::size_t>(j)));
  return D;
}

IohEval ioh_vector_field(const IohModel& ioh, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  if (u.size() != ioh.m()) throw DimensionError("input dimension mismatch");
  const Eigen::MatrixXd D = output_jacobian(ioh, x);
  const Eigen::VectorXd effort = ioh.H.value_grad(x).gradient - D.transpose() * u;
  IohEval out;
  out.xdot = (ioh.J.evaluate(x) - ioh.R.evaluate(x)) * effort;
  out.y = ioh_output(ioh, x);
  out.ydot = D * out.xdot;
  return out;
}

Eigen::VectorXd differentiated_output(const IohModel& ioh, const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& u) {
  return ioh_vector_field(ioh, x, u).ydot;
}

ValidationReport validate_ioh(const IohModel& ioh, std::span<const Eigen::VectorXd> samples,
                              std::optional<std::uint64_t> seed) {
  ValidationReport report = validate_phs(structure_view(ioh), samples, seed);
  Check out{"output map", true, 0.0, 0.0, ""};
  for (const auto& c : ioh.C) {
    if (c.variables() != ioh.state) {
      out.passed = false;
      out.detail = "output expressions are not over the state names";
    }
  }
  if (out.passed) {
    for (const auto& x : samples) {
      try {
        output_jacobian(ioh, x);
      } catch (const Error& e) {
        out.passed = false;
        out.value += 1.0;
        if (out.detail.empty()) out.detail = e.what();
      }
    }
  }
  report.checks.push_back(out);
  return report;
}

ValidationReport validate_ioh(const IohModel& ioh, std::uint64_t seed) {
  const auto samples = default_samples(ioh.n(), seed);
  return validate_ioh(ioh, samples, seed);
}

ExtendedPhsModel ioh_to_phs(const IohModel& ioh) {
  const MatrixField D = output_jacobian_field(ioh);
  const MatrixField Dt = D.transpose();
  const MatrixField Gp = -(ioh.J * Dt);
  const MatrixField P = -(ioh.R * Dt);
  ExtendedPhsModel ext;
  // The dynamics see the input through G' - P = -(J - R) dC^T.
  ext.base = make_phs(ioh.state, ioh.J, ioh.R, Gp - P, ioh.H);
  ext.base.metadata = ioh.metadata;
  ext.P = P.is_constant() ? P.rebind(ioh.state) : P;
  ext.S = D * ioh.R * Dt;
  ext.M = -(D * ioh.J * Dt);
  if (ext.S.is_constant()) ext.S = ext.S.rebind(ioh.state);
  if (ext.M.is_constant()) ext.M = ext.M.rebind(ioh.state);
  return ext;
}

IohModel phs_to_ioh(const ExtendedPhsModel& phs, std::vector<Expr> C, std::uint64_t seed) {
  if (phs.base.rayleigh)
    throw PreconditionError("Rayleigh dissipation has no input-output Hamiltonian form");
  IohModel ioh = make_ioh(phs.base.state, phs.base.J, phs.base.R, phs.base.H, std::move(C));
  ioh.metadata = phs.base.metadata;
  if (ioh.m() != phs.base.m())
    throw DimensionError("expected " + std::to_string(phs.base.m()) + " output expressions");
  const MatrixField port = phs.port_matrix();
  struct Identity {
    const char* name;
    double worst = 0.0;
  };
  Identity ids[] = {{"G = -J dC^T/dx"},
                    {"P = -R dC^T/dx"},
                    {"S = dC/dx R dC^T/dx"},
                    {"M = -dC/dx J dC^T/dx"}};
  for (const auto& x : default_samples(ioh.n(), seed)) {
    const Eigen::MatrixXd D = output_jacobian(ioh, x);
    const Eigen::MatrixXd J = ioh.J.evaluate(x), R = ioh.R.evaluate(x);
    ids[0].worst = std::max(ids[0].worst, linalg::max_abs(port.evaluate(x) + J * D.transpose()));
    ids[1].worst = std::max(ids[1].worst, linalg::max_abs(phs.P.evaluate(x) + R * D.transpose()));
    ids[2].worst =
        std::max(ids[2].worst, linalg::max_abs(phs.S.evaluate(x) - D * R * D.transpose()));
    ids[3].worst =
        std::max(ids[3].worst, linalg::max_abs(phs.M.evaluate(x) + D * J * D.transpose()));
  }
  for (const auto& id : ids)
    if (id.worst > kIohConditionTolerance) throw CheckFailure(id.name, id.worst);
  return ioh;
}

IohModel phs_to_ioh(const PhsModel& phs, std::vector<Expr> C, std::uint64_t seed) {
  const Eigen::Index n = phs.n(), m = phs.m();
  ExtendedPhsModel ext{phs, MatrixField::zero(n, m, phs.state), MatrixField::zero(m, m, phs.state),
                       MatrixField::zero(m, m, phs.state)};
  return phs_to_ioh(ext, std::move(C), seed);
}

IohInterconnection positive_feedback(const IohModel& a, const IohModel& b) {
  if (a.m() != b.m()) throw DimensionError("positive feedback needs equal port dimensions");
  const ProductState ps = product_state(a.state, b.state);
  Expr H = hamiltonian_expr(a, ps.embed_a, ps.names) + hamiltonian_expr(b, ps.embed_b, ps.names);
  for (Eigen::Index i = 0; i < a.m(); ++i)
    H = H - embed_in_product(a.C[i], ps.embed_a, ps.names) * embed_in_product(b.C[i], ps.embed_b, ps.names);
  IohInterconnection out{product_model(a, b, ps, H), "u1 = y2 + v1, u2 = y1 + v2"};
  out.model.metadata["interconnection"] = "positive";
  return out;
}

IohModel static_energy_feedback(const IohModel& ioh, const Expr& P) {
  if (static_cast<Eigen::Index>(P.arity()) != ioh.m())
    throw DimensionError("P must be a function of " + std::to_string(ioh.m()) + " outputs");
  const Expr shaped = ioh.H.to_expr(ioh.state) + P.substitute(ioh.C);
  IohModel out = make_ioh(ioh.state, ioh.J, ioh.R, hamiltonian_from_expr(shaped), ioh.C);
  out.metadata = ioh.metadata;
  out.metadata["interconnection"] = "static energy feedback, u = -dP/dy + v";
  return out;
}

IohInterconnection general_p_feedback(const IohModel& a, const IohModel& b, const Expr& P) {
  if (static_cast<Eigen::Index>(P.arity()) != a.m() + b.m())
    throw DimensionError("P must be a function of " + std::to_string(a.m() + b.m()) + " outputs");
  const ProductState ps = product_state(a.state, b.state);
  std::vector<Expr> outputs;
  for (const auto& c : a.C) outputs.push_back(embed_in_product(c, ps.embed_a, ps.names));
  for (const auto& c : b.C) outputs.push_back(embed_in_product(c, ps.embed_b, ps.names));
  Expr H = hamiltonian_expr(a, ps.embed_a, ps.names) + hamiltonian_expr(b, ps.embed_b, ps.names);
  if (!outputs.empty()) H = H + P.substitute(outputs);
  IohInterconnection out{product_model(a, b, ps, H), "u_i = -dP/dy_i(y1, y2) + v_i"};
  out.model.metadata["interconnection"] = "general-p";
  return out;
}

std::optional<std::pair<Eigen::MatrixXd, Eigen::VectorXd>> affine_output(const IohModel& ioh) {
  const MatrixField D = output_jacobian_field(ioh);
  if (!D.is_constant()) return std::nullopt;
  return std::make_pair(D.constant_value(), ioh_output(ioh, Eigen::VectorXd::Zero(ioh.n())));
}

const char* to_string(StabilityVerdict v) {
  switch (v) {
    case StabilityVerdict::kStable: return "stable";
    case StabilityVerdict::kUnstable: return "unstable";
    case StabilityVerdict::kMarginal: return "marginal";
  }
  return "marginal";
}

StabilityReport dc_loop_gain_stability(const IohModel& a, const IohModel& b) {
  if (a.m() != b.m()) throw DimensionError("dc loop gain needs equal port dimensions");
  const LinearComponent c1 = linear_component(a, "system 1");
  const LinearComponent c2 = linear_component(b, "system 2");
  StabilityReport r;
  // Constant input u: stationarity Q x = D^T u, so y = D Q^-1 D^T u.
  r.dc_gain_1 = c1.D * c1.Q.ldlt().solve(c1.D.transpose());
  r.dc_gain_2 = c2.D * c2.Q.ldlt().solve(c2.D.transpose());
  r.loop_gain = spectral_radius(r.dc_gain_1 * r.dc_gain_2);
  const Eigen::Index n1 = c1.Q.rows(), n2 = c2.Q.rows();
  r.hessian.resize(n1 + n2, n1 + n2);
  r.hessian << c1.Q, -c1.D.transpose() * c2.D, -c2.D.transpose() * c1.D, c2.Q;
  r.min_eigenvalue = linalg::min_symmetric_eigenvalue(r.hessian);
  r.verdict = classify(r.min_eigenvalue);
  r.loop_verdict = classify(1.0 - r.loop_gain);
  return r;
}

}  // namespace phkit
