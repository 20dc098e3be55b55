#include "phkit/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "phkit/error.hpp"

namespace phkit {
namespace {

// What an integrator needs from a model.
struct Dynamics {
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> field;
  std::function<void(Trajectory&, const Eigen::VectorXd&, const Eigen::VectorXd&)> record;
};

std::string time_text(double t) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", t);
  return buf;
}

Eigen::MatrixXd fd_jacobian(const Dynamics& dyn, const InputLaw& law, double t,
                            const Eigen::VectorXd& x) {
  const Eigen::VectorXd f0 = dyn.field(x, law(t, x));
  Eigen::MatrixXd jac(dyn.n, dyn.n);
  for (Eigen::Index i = 0; i < dyn.n; ++i) {
    const double step = 1e-7 * (1.0 + std::abs(x(i)));
    Eigen::VectorXd xp = x;
    xp(i) += step;
    jac.col(i) = (dyn.field(xp, law(t, xp)) - f0) / step;
  }
  return jac;
}

// Solves z = x + h f((x + z)/2, u(t + h/2, (x + z)/2)).
Eigen::VectorXd midpoint_step(const Dynamics& dyn, const InputLaw& law, double t, double h,
                              const Eigen::VectorXd& x, Trajectory& traj) {
  const double tm = t + 0.5 * h;
  Eigen::VectorXd z = x + h * dyn.field(x, law(t, x));
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(dyn.n, dyn.n);
  for (int it = 1; it <= traj.newton_max_iterations; ++it) {
    const Eigen::VectorXd xm = 0.5 * (x + z);
    const Eigen::VectorXd residual = z - x - h * dyn.field(xm, law(tm, xm));
    const Eigen::MatrixXd jac = eye - 0.5 * h * fd_jacobian(dyn, law, tm, xm);
    const Eigen::VectorXd delta = jac.partialPivLu().solve(-residual);
    if (!delta.allFinite()) break;
    z += delta;
    if (delta.lpNorm<Eigen::Infinity>() <= traj.newton_tolerance * (1.0 + z.lpNorm<Eigen::Infinity>())) {
      traj.newton_iterations_worst = std::max(traj.newton_iterations_worst, it);
      traj.newton_iterations_total += it;
      traj.u_mid.push_back(law(tm, 0.5 * (x + z)));
      return z;
    }
  }
  throw ConvergenceError("implicit midpoint Newton iteration did not converge at t=" +
                         time_text(t));
}

Eigen::VectorXd rk4_step(const Dynamics& dyn, const InputLaw& law, double t, double h,
                         const Eigen::VectorXd& x) {
  auto f = [&](double s, const Eigen::VectorXd& z) { return dyn.field(z, law(s, z)); };
  const Eigen::VectorXd k1 = f(t, x);
  const Eigen::VectorXd k2 = f(t + 0.5 * h, x + 0.5 * h * k1);
  const Eigen::VectorXd k3 = f(t + 0.5 * h, x + 0.5 * h * k2);
  const Eigen::VectorXd k4 = f(t + h, x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Trajectory integrate(const Dynamics& dyn, const std::vector<std::string>& names,
                     const InputLaw& law, const Eigen::VectorXd& x0, double t_end, double h,
                     Method method) {
  if (!(h > 0.0)) throw PreconditionError("step size must be positive");
  if (!(t_end > 0.0)) throw PreconditionError("end time must be positive");
  if (x0.size() != dyn.n) throw DimensionError("initial state dimension mismatch");
  const auto steps = static_cast<std::size_t>(std::llround(t_end / h));
  if (steps == 0) throw PreconditionError("end time is shorter than one step");

  Trajectory traj;
  traj.h = h;
  traj.method = method;
  traj.state_names = names;
  traj.x.reserve(steps + 1);
  Eigen::VectorXd x = x0;
  double t = 0.0;
  try {
    for (std::size_t k = 0;; ++k) {
      t = traj.time(k);
      const Eigen::VectorXd u = law(t, x);
      if (u.size() != dyn.m) throw DimensionError("input dimension mismatch");
      traj.x.push_back(x);
      traj.u.push_back(u);
      dyn.record(traj, x, u);
      if (k == steps) break;
      x = method == Method::kRk4 ? rk4_step(dyn, law, t, h, x)
                                 : midpoint_step(dyn, law, t, h, x, traj);
      if (!x.allFinite()) throw DomainError("state became non-finite");
    }
  } catch (const DomainError& e) {
    throw DomainError(std::string(e.what()) + " (blow-up at t=" + time_text(t) + ")");
  }
  return traj;
}

Dynamics phs_dynamics(const PhsModel& model) {
  Dynamics d;
  d.n = model.n();
  d.m = model.m();
  d.field = [&model](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    return phs_vector_field(model, x, u).xdot;
  };
  d.record = [&model](Trajectory& tr, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    tr.y.push_back(phs_vector_field(model, x, u).y);
    tr.H.push_back(model.H.value(x));
  };
  return d;
}

Dynamics ioh_dynamics(const IohModel& ioh) {
  Dynamics d;
  d.n = ioh.n();
  d.m = ioh.m();
  d.field = [&ioh](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    return ioh_vector_field(ioh, x, u).xdot;
  };
  d.record = [&ioh](Trajectory& tr, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    const IohEval e = ioh_vector_field(ioh, x, u);
    tr.y.push_back(e.y);
    tr.ydot.push_back(e.ydot);
    tr.H.push_back(ioh.H.value(x));
  };
  return d;
}

// Power terms at one point: dH/dt along the flow, supply, dissipation.
struct Rates {
  double hdot;
  double supply;
  double dissipation;
};

using RateFn = std::function<Rates(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

// Composite Simpson on a uniform grid; 3/8 rule on the last three intervals
// when the interval count is odd.
double simpson(const std::vector<double>& g, double h) {
  const std::size_t n = g.size() - 1;
  if (n == 0) return 0.0;
  if (n == 1) return 0.5 * h * (g[0] + g[1]);
  std::size_t even = n % 2 == 0 ? n : n - 3;
  double sum = 0.0;
  for (std::size_t k = 0; k + 2 <= even; k += 2) sum += h / 3.0 * (g[k] + 4.0 * g[k + 1] + g[k + 2]);
  if (even != n) {
    const std::size_t k = even;
    sum += 3.0 * h / 8.0 * (g[k] + 3.0 * g[k + 1] + 3.0 * g[k + 2] + g[k + 3]);
  }
  return sum;
}

AuditReport audit(const Trajectory& traj, Eigen::Index n, Eigen::Index m,
                  const std::function<double(const Eigen::VectorXd&)>& energy, const RateFn& rates) {
  if (traj.x.empty()) throw DimensionError("empty trajectory");
  if (traj.u.size() != traj.x.size()) throw DimensionError("trajectory input samples missing");
  for (std::size_t k = 0; k < traj.x.size(); ++k) {
    if (traj.x[k].size() != n || traj.u[k].size() != m)
      throw DimensionError("trajectory does not match the model dimensions");
  }
  AuditReport rep;
  const double h0 = energy(traj.x.front());
  if (!traj.H.empty()) {
    for (std::size_t k = 0; k < traj.x.size(); k += std::max<std::size_t>(1, traj.x.size() / 16)) {
      const double hk = energy(traj.x[k]);
      if (std::abs(hk - traj.H[k]) > 1e-9 * (1.0 + std::abs(hk)))
        throw DimensionError("trajectory energy samples do not match the model");
    }
  }
  rep.passivity_margin = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < traj.x.size(); ++k) {
    const Rates r = rates(traj.x[k], traj.u[k]);
    rep.passivity_margin = std::max(rep.passivity_margin, r.hdot - r.supply);
    rep.energy_drift = std::max(rep.energy_drift, std::abs(energy(traj.x[k]) - h0));
  }
  const double integral = trajectory_integral(traj, [&](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    const Rates r = rates(x, u);
    return r.supply - r.dissipation;
  });
  rep.balance_residual = energy(traj.x.back()) - h0 - integral;
  rep.passed = rep.passivity_margin <= rep.tolerance;
  return rep;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

double trajectory_integral(const Trajectory& traj,
                           const std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>& g) {
  if (traj.x.empty()) throw DimensionError("empty trajectory");
  const std::size_t steps = traj.steps();
  if (traj.method == Method::kMidpoint) {
    double integral = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
      const Eigen::VectorXd xm = 0.5 * (traj.x[k] + traj.x[k + 1]);
      const Eigen::VectorXd um =
          k < traj.u_mid.size() ? traj.u_mid[k] : Eigen::VectorXd(0.5 * (traj.u[k] + traj.u[k + 1]));
      integral += traj.h * g(xm, um);
    }
    return integral;
  }
  std::vector<double> samples(traj.x.size());
  for (std::size_t k = 0; k < traj.x.size(); ++k) samples[k] = g(traj.x[k], traj.u[k]);
  return simpson(samples, traj.h);
}

const char* to_string(Method m) { return m == Method::kRk4 ? "rk4" : "midpoint"; }

Method parse_method(const std::string& name) {
  if (name == "rk4") return Method::kRk4;
  if (name == "midpoint" || name == "implicit-midpoint") return Method::kMidpoint;
  throw PreconditionError("unknown integration method \"" + name + "\"");
}

InputLaw open_loop(const SignalSpec& u) {
  return [u](double t, const Eigen::VectorXd&) { return u.at(t); };
}

Trajectory simulate_phs(const PhsModel& model, const InputLaw& u, const Eigen::VectorXd& x0,
                        double t_end, double h, Method method) {
  return integrate(phs_dynamics(model), model.state, u, x0, t_end, h, method);
}

Trajectory simulate_phs(const PhsModel& model, const SignalSpec& u, const Eigen::VectorXd& x0,
                        double t_end, double h, Method method) {
  if (u.dimension() != model.m()) throw DimensionError("input signal dimension mismatch");
  return simulate_phs(model, open_loop(u), x0, t_end, h, method);
}

Trajectory simulate_ioh(const IohModel& ioh, const InputLaw& u, const Eigen::VectorXd& x0,
                        double t_end, double h, Method method) {
  return integrate(ioh_dynamics(ioh), ioh.state, u, x0, t_end, h, method);
}

Trajectory simulate_ioh(const IohModel& ioh, const SignalSpec& u, const Eigen::VectorXd& x0,
                        double t_end, double h, Method method) {
  if (u.dimension() != ioh.m()) throw DimensionError("input signal dimension mismatch");
  return simulate_ioh(ioh, open_loop(u), x0, t_end, h, method);
}

AuditReport energy_audit(const Trajectory& traj, const PhsModel& model) {
  return audit(
      traj, model.n(), model.m(), [&](const Eigen::VectorXd& x) { return model.H.value(x); },
      [&](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
        const PhsEval e = phs_vector_field(model, x, u);
        return Rates{model.H.value_grad(x).gradient.dot(e.xdot), u.dot(e.y),
                     dissipated_power(model, x)};
      });
}

AuditReport energy_audit(const Trajectory& traj, const IohModel& ioh) {
  return audit(
      traj, ioh.n(), ioh.m(), [&](const Eigen::VectorXd& x) { return ioh.H.value(x); },
      [&](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
        const IohEval e = ioh_vector_field(ioh, x, u);
        const Eigen::VectorXd effort =
            ioh.H.value_grad(x).gradient - output_jacobian(ioh, x).transpose() * u;
        return Rates{ioh.H.value_grad(x).gradient.dot(e.xdot), u.dot(e.ydot),
                     effort.dot(ioh.R.evaluate(x) * effort)};
      });
}

void write_csv(std::ostream& out, const Trajectory& traj) {
  const std::size_t m = traj.u.empty() ? 0 : static_cast<std::size_t>(traj.u.front().size());
  const std::size_t p = traj.y.empty() ? 0 : static_cast<std::size_t>(traj.y.front().size());
  out << "t";
  for (const auto& name : traj.state_names) out << ",x:" << name;
  for (std::size_t i = 1; i <= m; ++i) out << ",u:" << i;
  for (std::size_t i = 1; i <= p; ++i) out << ",y:" << i;
  out << ",H\n";
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << ',' << buf;
  };
  for (std::size_t k = 0; k < traj.x.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g", traj.time(k));
    out << buf;
    for (Eigen::Index i = 0; i < traj.x[k].size(); ++i) put(traj.x[k](i));
    for (Eigen::Index i = 0; i < traj.u[k].size(); ++i) put(traj.u[k](i));
    if (k < traj.y.size())
      for (Eigen::Index i = 0; i < traj.y[k].size(); ++i) put(traj.y[k](i));
    put(k < traj.H.size() ? traj.H[k] : std::nan(""));
    out << '\n';
  }
}

void write_csv_file(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_csv(out, traj);
  if (!out) throw Error("error while writing " + path);
}

Trajectory read_csv(std::istream& in, Method method) {
  std::string line;
  if (!std::getline(in, line)) throw Error("empty trajectory file");
  const auto header = split(line);
  if (header.empty() || header.front() != "t" || header.back() != "H")
    throw Error("trajectory header must start with t and end with H");
  Trajectory traj;
  traj.method = method;
  std::size_t nu = 0, ny = 0;
  for (std::size_t c = 1; c + 1 < header.size(); ++c) {
    const std::string& h = header[c];
    if (h.rfind("x:", 0) == 0) {
      if (nu || ny) throw Error("state columns must precede inputs and outputs");
      traj.state_names.push_back(h.substr(2));
    } else if (h == "u:" + std::to_string(nu + 1)) {
      if (ny) throw Error("input columns must precede outputs");
      ++nu;
    } else if (h == "y:" + std::to_string(ny + 1)) {
      ++ny;
    } else {
      throw Error("unexpected trajectory column \"" + h + "\"");
    }
  }
  const std::size_t n = traj.state_names.size();
  std::vector<double> times;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw Error("trajectory row " + std::to_string(row) + " has " +
                  std::to_string(cells.size()) + " cells, expected " +
                  std::to_string(header.size()));
    std::vector<double> v(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      char* end = nullptr;
      v[c] = std::strtod(cells[c].c_str(), &end);
      if (cells[c].empty() || *end != '\0')
        throw Error("trajectory row " + std::to_string(row) + ": bad number \"" + cells[c] + "\"");
    }
    times.push_back(v[0]);
    traj.x.push_back(Eigen::Map<Eigen::VectorXd>(v.data() + 1, static_cast<Eigen::Index>(n)));
    traj.u.push_back(Eigen::Map<Eigen::VectorXd>(v.data() + 1 + n, static_cast<Eigen::Index>(nu)));
    traj.y.push_back(
        Eigen::Map<Eigen::VectorXd>(v.data() + 1 + n + nu, static_cast<Eigen::Index>(ny)));
    traj.H.push_back(v.back());
  }
  if (times.size() < 2) throw Error("trajectory needs at least two rows");
  traj.t0 = times.front();
  traj.h = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  if (!(traj.h > 0.0)) throw Error("trajectory times must increase");
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (std::abs(times[k] - traj.time(k)) > 1e-9 * (1.0 + std::abs(times[k])))
      throw Error("trajectory times are not uniformly spaced");
  }
  return traj;
}

Trajectory read_csv_file(const std::string& path, Method method) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  return read_csv(in, method);
}

}  // namespace phkit
