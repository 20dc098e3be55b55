#include "phkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "phkit/linalg.hpp"

namespace phkit {
namespace {

using Entry = MatrixField::Entry;

bool is_numeric(const Entry& e) { return std::holds_alternative<double>(e); }

Expr as_expr(const Entry& e, const std::vector<std::string>& vars) {
  if (is_numeric(e)) return Expr::constant(std::get<double>(e), vars);
  return std::get<Expr>(e);
}

Entry normalize(Entry e) {
  if (auto* ex = std::get_if<Expr>(&e)) {
    if (ex->is_constant()) {
      const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ex->arity()));
      return ex->eval(zeros);
    }
  }
  return e;
}

Entry add(const Entry& a, const Entry& b, const std::vector<std::string>& vars) {
  if (is_numeric(a) && is_numeric(b)) return std::get<double>(a) + std::get<double>(b);
  if (is_numeric(a) && std::get<double>(a) == 0.0) return b;
  if (is_numeric(b) && std::get<double>(b) == 0.0) return a;
  return normalize(as_expr(a, vars) + as_expr(b, vars));
}

Entry mul(const Entry& a, const Entry& b, const std::vector<std::string>& vars) {
  if (is_numeric(a) && is_numeric(b)) return std::get<double>(a) * std::get<double>(b);
  if ((is_numeric(a) && std::get<double>(a) == 0.0) || (is_numeric(b) && std::get<double>(b) == 0.0))
    return 0.0;
  return normalize(as_expr(a, vars) * as_expr(b, vars));
}

Entry neg(const Entry& a) {
  if (is_numeric(a)) return -std::get<double>(a);
  return normalize(-std::get<Expr>(a));
}

// Variable list for combining fields: constant fields adapt to the other.
std::vector<std::string> unify(const MatrixField& a, const MatrixField& b) {
  if (a.variables() == b.variables()) return a.variables();
  if (a.is_constant()) return b.variables();
  if (b.is_constant()) return a.variables();
  throw DimensionError("matrix fields are over different variable lists");
}

}  // namespace

// ---------------------------------------------------------------------------
// MatrixField

MatrixField::MatrixField(Eigen::Index rows, Eigen::Index cols, std::vector<std::string> variables)
    : rows_(rows),
      cols_(cols),
      variables_(std::move(variables)),
      entries_(static_cast<std::size_t>(rows * cols), Entry(0.0)) {}

MatrixField MatrixField::constant(const Eigen::MatrixXd& value,
                                  std::vector<std::string> variables) {
  MatrixField f(value.rows(), value.cols(), std::move(variables));
  for (Eigen::Index i = 0; i < value.rows(); ++i)
    for (Eigen::Index j = 0; j < value.cols(); ++j) f.entries_[i * f.cols_ + j] = value(i, j);
  return f;
}

MatrixField MatrixField::zero(Eigen::Index rows, Eigen::Index cols,
                              std::vector<std::string> variables) {
  return MatrixField(rows, cols, std::move(variables));
}

MatrixField MatrixField::identity(Eigen::Index n, std::vector<std::string> variables) {
  return constant(Eigen::MatrixXd::Identity(n, n), std::move(variables));
}

void MatrixField::set(Eigen::Index i, Eigen::Index j, Entry value) {
  if (i < 0 || j < 0 || i >= rows_ || j >= cols_) throw DimensionError("entry index out of range");
  if (auto* e = std::get_if<Expr>(&value)) {
    if (e->variables() != variables_) value = e->rebind(variables_);
  } else if (!std::isfinite(std::get<double>(value))) {
    throw DomainError("non-finite matrix entry");
  }
  entries_[i * cols_ + j] = normalize(std::move(value));
}

bool MatrixField::is_constant() const {
  return std::all_of(entries_.begin(), entries_.end(), is_numeric);
}

Eigen::MatrixXd MatrixField::constant_value() const {
  if (!is_constant()) throw PreconditionError("matrix field depends on the state");
  Eigen::MatrixXd out(rows_, cols_);
  for (Eigen::Index i = 0; i < rows_; ++i)
    for (Eigen::Index j = 0; j < cols_; ++j) out(i, j) = std::get<double>(at(i, j));
  return out;
}

Eigen::MatrixXd MatrixField::evaluate(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd out(rows_, cols_);
  for (Eigen::Index i = 0; i < rows_; ++i) {
    for (Eigen::Index j = 0; j < cols_; ++j) {
      const Entry& e = at(i, j);
      out(i, j) = is_numeric(e) ? std::get<double>(e) : std::get<Expr>(e).eval(x);
    }
  }
  return out;
}

MatrixField MatrixField::transpose() const {
  MatrixField out(cols_, rows_, variables_);
  for (Eigen::Index i = 0; i < rows_; ++i)
    for (Eigen::Index j = 0; j < cols_; ++j) out.entries_[j * rows_ + i] = at(i, j);
  return out;
}

MatrixField MatrixField::rebind(std::vector<std::string> variables) const {
  MatrixField out(rows_, cols_, variables);
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    const Entry& e = entries_[k];
    out.entries_[k] = is_numeric(e) ? e : Entry(std::get<Expr>(e).rebind(variables));
  }
  return out;
}

MatrixField MatrixField::substitute(const std::vector<Expr>& replacements,
                                    std::vector<std::string> variables) const {
  MatrixField out(rows_, cols_, std::move(variables));
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    if (is_numeric(entries_[k]))
      out.entries_[k] = entries_[k];
    else
      out.entries_[k] = normalize(std::get<Expr>(entries_[k]).substitute(replacements));
  }
  return out;
}

MatrixField MatrixField::blocks(const MatrixField& a, const MatrixField& b, const MatrixField& c,
                                const MatrixField& d) {
  if (a.rows_ != b.rows_ || c.rows_ != d.rows_ || a.cols_ != c.cols_ || b.cols_ != d.cols_)
    throw DimensionError("inconsistent block sizes");
  std::vector<std::string> vars;
  for (const MatrixField* f : {&a, &b, &c, &d}) {
    if (!f->is_constant()) {
      if (vars.empty()) vars = f->variables_;
      else if (vars != f->variables_) throw DimensionError("blocks over different variable lists");
    }
  }
  if (vars.empty()) vars = a.variables_;
  MatrixField out(a.rows_ + c.rows_, a.cols_ + b.cols_, vars);
  auto place = [&](const MatrixField& f, Eigen::Index r0, Eigen::Index c0) {
    for (Eigen::Index i = 0; i < f.rows_; ++i)
      for (Eigen::Index j = 0; j < f.cols_; ++j)
        out.entries_[(r0 + i) * out.cols_ + c0 + j] = f.at(i, j);
  };
  place(a, 0, 0);
  place(b, 0, a.cols_);
  place(c, a.rows_, 0);
  place(d, a.rows_, a.cols_);
  return out;
}

MatrixField MatrixField::block_diagonal(const MatrixField& a, const MatrixField& b) {
  return blocks(a, zero(a.rows_, b.cols_, a.variables_), zero(b.rows_, a.cols_, a.variables_), b);
}

MatrixField operator+(const MatrixField& a, const MatrixField& b) {
  if (a.rows_ != b.rows_ || a.cols_ != b.cols_) throw DimensionError("matrix field sum size");
  MatrixField out(a.rows_, a.cols_, unify(a, b));
  for (std::size_t k = 0; k < out.entries_.size(); ++k)
    out.entries_[k] = add(a.entries_[k], b.entries_[k], out.variables_);
  return out;
}

MatrixField operator-(const MatrixField& a) {
  MatrixField out(a.rows_, a.cols_, a.variables_);
  for (std::size_t k = 0; k < out.entries_.size(); ++k) out.entries_[k] = neg(a.entries_[k]);
  return out;
}

MatrixField operator-(const MatrixField& a, const MatrixField& b) { return a + (-b); }

MatrixField operator*(const MatrixField& a, const MatrixField& b) {
  if (a.cols_ != b.rows_) throw DimensionError("matrix field product size");
  MatrixField out(a.rows_, b.cols_, unify(a, b));
  for (Eigen::Index i = 0; i < a.rows_; ++i) {
    for (Eigen::Index j = 0; j < b.cols_; ++j) {
      Entry acc = 0.0;
      for (Eigen::Index k = 0; k < a.cols_; ++k)
        acc = add(acc, mul(a.at(i, k), b.at(k, j), out.variables_), out.variables_);
      out.entries_[i * out.cols_ + j] = acc;
    }
  }
  return out;
}

MatrixField operator*(double s, const MatrixField& a) {
  MatrixField out(a.rows_, a.cols_, a.variables_);
  for (std::size_t k = 0; k < out.entries_.size(); ++k)
    out.entries_[k] = mul(Entry(s), a.entries_[k], a.variables_);
  return out;
}

// ---------------------------------------------------------------------------
// Hamiltonian

Hamiltonian Hamiltonian::quadratic(const Eigen::MatrixXd& Q, const Eigen::VectorXd& b, double c) {
  if (Q.rows() != Q.cols()) throw DimensionError("Q must be square");
  if (b.size() != 0 && b.size() != Q.rows()) throw DimensionError("b has the wrong length");
  if (!Q.allFinite() || !b.allFinite() || !std::isfinite(c))
    throw DomainError("non-finite quadratic Hamiltonian coefficients");
  Hamiltonian h;
  Quadratic q;
  q.Q = 0.5 * (Q + Q.transpose());
  q.b = b.size() == 0 ? Eigen::VectorXd::Zero(Q.rows()) : b;
  q.c = c;
  h.form_ = std::move(q);
  return h;
}

Hamiltonian Hamiltonian::expression(Expr e) {
  Hamiltonian h;
  h.form_ = std::move(e);
  return h;
}

Eigen::Index Hamiltonian::dimension() const {
  if (is_quadratic()) return quadratic_form().Q.rows();
  return static_cast<Eigen::Index>(expr().arity());
}

double Hamiltonian::value(const Eigen::VectorXd& x) const {
  if (x.size() != dimension()) throw DimensionError("Hamiltonian state dimension mismatch");
  if (is_quadratic()) {
    const auto& q = quadratic_form();
    return 0.5 * x.dot(q.Q * x) + q.b.dot(x) + q.c;
  }
  return expr().eval(x);
}

Hamiltonian::ValueGrad Hamiltonian::value_grad(const Eigen::VectorXd& x) const {
  if (x.size() != dimension()) throw DimensionError("Hamiltonian state dimension mismatch");
  if (is_quadratic()) {
    const auto& q = quadratic_form();
    Eigen::VectorXd g = q.Q * x + q.b;
    return {0.5 * x.dot(q.Q * x) + q.b.dot(x) + q.c, std::move(g)};
  }
  return expr().eval_grad(x);
}

Eigen::MatrixXd Hamiltonian::hessian(const Eigen::VectorXd& x) const {
  if (is_quadratic()) return quadratic_form().Q;
  const Eigen::Index n = x.size();
  Eigen::MatrixXd hess(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = 1e-5 * (1.0 + std::abs(x(i)));
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    hess.col(i) = (value_grad(xp).gradient - value_grad(xm).gradient) / (2.0 * h);
  }
  return 0.5 * (hess + hess.transpose());
}

Expr Hamiltonian::to_expr(const std::vector<std::string>& variables) const {
  if (!is_quadratic()) return expr().rebind(variables);
  const auto& q = quadratic_form();
  if (static_cast<Eigen::Index>(variables.size()) != q.Q.rows())
    throw DimensionError("variable count does not match the quadratic form");
  Expr out = Expr::constant(q.c, variables);
  std::vector<Expr> xs;
  for (const auto& name : variables) xs.push_back(Expr::variable(name, variables));
  for (Eigen::Index i = 0; i < q.Q.rows(); ++i) {
    if (q.b(i) != 0.0) out = out + Expr::constant(q.b(i), variables) * xs[i];
    if (q.Q(i, i) != 0.0)
      out = out + Expr::constant(0.5 * q.Q(i, i), variables) * (xs[i] * xs[i]);
    for (Eigen::Index j = i + 1; j < q.Q.cols(); ++j) {
      if (q.Q(i, j) != 0.0) out = out + Expr::constant(q.Q(i, j), variables) * (xs[i] * xs[j]);
    }
  }
  return out;
}

std::optional<Hamiltonian::Quadratic> quadratic_coefficients(const Expr& e) {
  const auto n = static_cast<Eigen::Index>(e.arity());
  Hamiltonian::Quadratic q;
  q.Q.resize(n, n);
  try {
    const Eigen::VectorXd origin = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Expr di = e.derivative(static_cast<std::size_t>(i));
      for (Eigen::Index j = 0; j < n; ++j) {
        const Expr dij = di.derivative(static_cast<std::size_t>(j));
        if (!dij.is_constant()) return std::nullopt;
        q.Q(i, j) = dij.eval(origin);
      }
    }
    const Expr::ValueGrad vg = e.eval_grad(origin);
    q.b = vg.gradient;
    q.c = vg.value;
  } catch (const DomainError&) {
    return std::nullopt;
  }
  q.Q = 0.5 * (q.Q + q.Q.transpose());
  return q;
}

Hamiltonian hamiltonian_from_expr(const Expr& e) {
  if (auto q = quadratic_coefficients(e)) return Hamiltonian::quadratic(q->Q, q->b, q->c);
  return Hamiltonian::expression(e);
}

ProductState product_state(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  ProductState out;
  for (const auto& n : a) out.names.push_back(sb.count(n) ? n + "_1" : n);
  for (const auto& n : b) out.names.push_back(sa.count(n) ? n + "_2" : n);
  if (std::set<std::string>(out.names.begin(), out.names.end()).size() != out.names.size())
    throw DimensionError("cannot make the combined state names unique");
  for (std::size_t i = 0; i < a.size(); ++i)
    out.embed_a.push_back(Expr::variable(out.names[i], out.names));
  for (std::size_t i = 0; i < b.size(); ++i)
    out.embed_b.push_back(Expr::variable(out.names[a.size() + i], out.names));
  return out;
}

MatrixField embed_in_product(const MatrixField& f, const std::vector<Expr>& vars,
                  const std::vector<std::string>& names) {
  if (f.is_constant()) return MatrixField::constant(f.constant_value(), names);
  return f.substitute(vars, names);
}

Expr embed_in_product(const Expr& e, const std::vector<Expr>& vars, const std::vector<std::string>& names) {
  if (e.is_constant()) return Expr::constant(e.eval(Eigen::VectorXd::Zero(e.arity())), names);
  return e.substitute(vars);
}


Hamiltonian::ValueGrad hamiltonian_value_grad(const Hamiltonian& h, const Eigen::VectorXd& x) {
  return h.value_grad(x);
}

// ---------------------------------------------------------------------------
// PhsModel

void check_dimensions(const PhsModel& model) {
  const Eigen::Index n = model.n();
  auto square = [n](const MatrixField& f, const char* name) {
    if (f.rows() != n || f.cols() != n)
      throw DimensionError(std::string(name) + " must be " + std::to_string(n) + "x" +
                           std::to_string(n));
  };
  square(model.J, "J");
  square(model.R, "R");
  if (model.G.rows() != n) throw DimensionError("G must have " + std::to_string(n) + " rows");
  if (model.H.dimension() != n) throw DimensionError("Hamiltonian dimension mismatch");
  if (!model.H.is_quadratic() && model.H.expr().variables() != model.state)
    throw DimensionError("Hamiltonian expression is not over the state names");
  for (const MatrixField* f : {&model.J, &model.R, &model.G}) {
    if (!f->is_constant() && f->variables() != model.state)
      throw DimensionError("matrix entries are not over the state names");
  }
  if (model.rayleigh) {
    const auto& r = *model.rayleigh;
    if (r.GR.rows() != n) throw DimensionError("G_R must have " + std::to_string(n) + " rows");
    if (static_cast<Eigen::Index>(r.function.arity()) != r.GR.cols())
      throw DimensionError("Rayleigh function arity must equal the columns of G_R");
    if (!r.GR.is_constant() && r.GR.variables() != model.state)
      throw DimensionError("G_R entries are not over the state names");
  }
}

PhsModel make_phs(std::vector<std::string> state, MatrixField J, MatrixField R, MatrixField G,
                  Hamiltonian H, std::optional<Rayleigh> rayleigh) {
  PhsModel model;
  model.state = std::move(state);
  model.J = J.is_constant() ? J.rebind(model.state) : std::move(J);
  model.R = R.is_constant() ? R.rebind(model.state) : std::move(R);
  model.G = G.is_constant() ? G.rebind(model.state) : std::move(G);
  model.H = std::move(H);
  model.rayleigh = std::move(rayleigh);
  if (model.rayleigh && model.rayleigh->GR.is_constant())
    model.rayleigh->GR = model.rayleigh->GR.rebind(model.state);
  check_dimensions(model);
  return model;
}

PhsEval phs_vector_field(const PhsModel& model, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& u) {
  if (x.size() != model.n()) throw DimensionError("state dimension mismatch");
  if (u.size() != model.m()) throw DimensionError("input dimension mismatch");
  const Eigen::VectorXd grad = model.H.value_grad(x).gradient;
  const Eigen::MatrixXd G = model.G.evaluate(x);
  PhsEval out;
  if (model.rayleigh) {
    const Eigen::MatrixXd GR = model.rayleigh->GR.evaluate(x);
    const Eigen::VectorXd flow = GR.transpose() * grad;
    const Eigen::VectorXd effort = model.rayleigh->function.eval_grad(flow).gradient;
    out.xdot = model.J.evaluate(x) * grad - GR * effort + G * u;
  } else {
    out.xdot = (model.J.evaluate(x) - model.R.evaluate(x)) * grad + G * u;
  }
  out.y = G.transpose() * grad;
  return out;
}

double dissipated_power(const PhsModel& model, const Eigen::VectorXd& x) {
  const Eigen::VectorXd grad = model.H.value_grad(x).gradient;
  if (model.rayleigh) {
    const Eigen::VectorXd flow = model.rayleigh->GR.evaluate(x).transpose() * grad;
    return flow.dot(model.rayleigh->function.eval_grad(flow).gradient);
  }
  return grad.dot(model.R.evaluate(x) * grad);
}

// ---------------------------------------------------------------------------
// Validation

bool ValidationReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

const Check* ValidationReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

std::vector<Eigen::VectorXd> default_samples(Eigen::Index n, std::uint64_t seed, int count) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<Eigen::VectorXd> out;
  out.push_back(Eigen::VectorXd::Zero(n));
  for (int k = 0; k < count; ++k) {
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i) x(i) = dist(rng);
    out.push_back(std::move(x));
  }
  return out;
}

ValidationReport validate_phs(const PhsModel& model, std::span<const Eigen::VectorXd> samples,
                              std::optional<std::uint64_t> seed) {
  ValidationReport report;
  report.seed = seed;
  report.sample_count = samples.size();

  Check dims{"dimensions", true, 0.0, 0.0, ""};
  try {
    check_dimensions(model);
  } catch (const DimensionError& e) {
    dims.passed = false;
    dims.value = 1.0;
    dims.detail = e.what();
  }
  report.checks.push_back(dims);
  if (!dims.passed) return report;

  Check eval{"evaluation", true, 0.0, 0.0, ""};
  Check skew{"J skew-symmetric", true, 0.0, kStructureTolerance, ""};
  Check sym{"R symmetric", true, 0.0, kStructureTolerance, ""};
  Check psd{"R positive semidefinite", true, std::numeric_limits<double>::infinity(),
            kStructureTolerance, "value is the smallest eigenvalue of R"};
  Check mono{"Rayleigh monotonicity", true, std::numeric_limits<double>::infinity(),
             kStructureTolerance, "value is min f_R^T dR/df_R over samples"};

  std::mt19937_64 rng(seed.value_or(kDefaultSeed) + 1);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);

  for (const auto& x : samples) {
    try {
      if (x.size() != model.n()) throw DimensionError("sample point dimension mismatch");
      const Eigen::MatrixXd J = model.J.evaluate(x);
      const Eigen::MatrixXd R = model.R.evaluate(x);
      model.G.evaluate(x);
      skew.value = std::max(skew.value, linalg::skew_violation(J));
      sym.value = std::max(sym.value, linalg::symmetry_violation(R));
      psd.value = std::min(psd.value, linalg::min_symmetric_eigenvalue(R));
      const auto grad = model.H.value_grad(x).gradient;
      if (model.rayleigh) {
        const auto& ray = *model.rayleigh;
        std::vector<Eigen::VectorXd> flows{ray.GR.evaluate(x).transpose() * grad};
        Eigen::VectorXd random_flow(ray.GR.cols());
        for (Eigen::Index i = 0; i < random_flow.size(); ++i) random_flow(i) = dist(rng);
        flows.push_back(random_flow);
        for (const auto& f : flows)
          mono.value = std::min(mono.value, f.dot(ray.function.eval_grad(f).gradient));
      }
    } catch (const Error& e) {
      eval.passed = false;
      eval.value += 1.0;
      if (eval.detail.empty()) eval.detail = e.what();
    }
  }
  if (samples.empty()) psd.value = 0.0;
  skew.passed = skew.value <= kStructureTolerance;
  sym.passed = sym.value <= kStructureTolerance;
  psd.passed = psd.value >= -kStructureTolerance;
  report.checks.push_back(eval);
  report.checks.push_back(skew);
  report.checks.push_back(sym);
  report.checks.push_back(psd);
  if (model.rayleigh) {
    if (!std::isfinite(mono.value)) mono.value = 0.0;
    mono.passed = mono.value >= -kStructureTolerance;
    report.checks.push_back(mono);
  }
  return report;
}

ValidationReport validate_phs(const PhsModel& model, std::uint64_t seed) {
  const auto samples = default_samples(model.n(), seed);
  return validate_phs(model, samples, seed);
}

// ---------------------------------------------------------------------------
// Extended (alternate output) form

ValidationReport validate_extended(const ExtendedPhsModel& model,
                                   std::span<const Eigen::VectorXd> samples) {
  ValidationReport report = validate_phs(model.base, samples);
  const Eigen::Index n = model.base.n(), m = model.base.m();
  Check dims{"extended dimensions", true, 0.0, 0.0, ""};
  if (model.P.rows() != n || model.P.cols() != m || model.M.rows() != m || model.M.cols() != m ||
      model.S.rows() != m || model.S.cols() != m) {
    dims.passed = false;
    dims.value = 1.0;
    dims.detail = "P must be n x m, M and S m x m";
  }
  if (model.base.rayleigh) {
    dims.passed = false;
    dims.value = 1.0;
    dims.detail = "Rayleigh dissipation cannot be combined with an alternate output";
  }
  report.checks.push_back(dims);
  if (!dims.passed) return report;

  Check skew{"M skew-symmetric", true, 0.0, kStructureTolerance, ""};
  Check sym{"S symmetric", true, 0.0, kStructureTolerance, ""};
  Check block{"[R P; P^T S] positive semidefinite", true,
              std::numeric_limits<double>::infinity(), kStructureTolerance,
              "value is the smallest eigenvalue of the block matrix"};
  for (const auto& x : samples) {
    const Eigen::MatrixXd R = model.base.R.evaluate(x);
    const Eigen::MatrixXd P = model.P.evaluate(x);
    const Eigen::MatrixXd M = model.M.evaluate(x);
    const Eigen::MatrixXd S = model.S.evaluate(x);
    skew.value = std::max(skew.value, linalg::skew_violation(M));
    sym.value = std::max(sym.value, linalg::symmetry_violation(S));
    Eigen::MatrixXd B(n + m, n + m);
    B << R, P, P.transpose(), S;
    block.value = std::min(block.value, linalg::min_symmetric_eigenvalue(B));
  }
  if (samples.empty()) block.value = 0.0;
  skew.passed = skew.value <= kStructureTolerance;
  sym.passed = sym.value <= kStructureTolerance;
  block.passed = block.value >= -kStructureTolerance;
  report.checks.push_back(skew);
  report.checks.push_back(sym);
  report.checks.push_back(block);
  return report;
}

ExtendedPhsModel build_extended(const PhsModel& model, const MatrixField& P, const MatrixField& M,
                                const MatrixField& S, std::uint64_t seed) {
  if (model.rayleigh)
    throw PreconditionError("Rayleigh dissipation cannot be combined with an alternate output");
  ExtendedPhsModel ext{model, P.is_constant() ? P.rebind(model.state) : P,
                       M.is_constant() ? M.rebind(model.state) : M,
                       S.is_constant() ? S.rebind(model.state) : S};
  const auto samples = default_samples(model.n(), seed);
  const ValidationReport report = validate_extended(ext, samples);
  for (const auto& c : report.checks) {
    if (c.passed) continue;
    if (c.name == "dimensions" || c.name == "extended dimensions")
      throw DimensionError(c.detail);
    throw CheckFailure(c.name, c.value, c.detail);
  }
  return ext;
}

Eigen::VectorXd extended_output(const ExtendedPhsModel& model, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& u) {
  if (u.size() != model.base.m()) throw DimensionError("input dimension mismatch");
  const Eigen::VectorXd grad = model.base.H.value_grad(x).gradient;
  const Eigen::MatrixXd G = model.base.G.evaluate(x);
  const Eigen::MatrixXd P = model.P.evaluate(x);
  return (G + 2.0 * P).transpose() * grad + (model.M.evaluate(x) + model.S.evaluate(x)) * u;
}

// ---------------------------------------------------------------------------
// Signals

SignalSpec SignalSpec::zero(Eigen::Index m) { return constant(Eigen::VectorXd::Zero(m)); }

SignalSpec SignalSpec::constant(Eigen::VectorXd value) {
  SignalSpec s;
  s.dim_ = value.size();
  s.constant_ = std::move(value);
  return s;
}

SignalSpec SignalSpec::expressions(std::vector<Expr> channels) {
  SignalSpec s;
  for (const auto& c : channels) {
    if (c.variables() != std::vector<std::string>{"t"})
      throw DimensionError("input expressions must be over the single variable t");
  }
  s.dim_ = static_cast<Eigen::Index>(channels.size());
  s.channels_ = std::move(channels);
  return s;
}

Eigen::VectorXd SignalSpec::at(double t) const {
  if (constant_) return *constant_;
  Eigen::VectorXd u(dim_);
  const double tt[1] = {t};
  for (Eigen::Index i = 0; i < dim_; ++i) u(i) = channels_[i].eval(std::span<const double>(tt, 1));
  return u;
}

}  // namespace phkit
