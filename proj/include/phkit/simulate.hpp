#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phkit/energyport.hpp"
#include "phkit/model.hpp"

namespace phkit {

enum class Method { kRk4, kMidpoint };

const char* to_string(Method m);
// "rk4" or "midpoint" (also "implicit-midpoint"); PreconditionError otherwise.
Method parse_method(const std::string& name);

inline constexpr double kNewtonTolerance = 1e-12;
inline constexpr int kNewtonMaxIterations = 50;
inline constexpr double kPassivityTolerance = 1e-9;

// Input as a function of time and state; state feedback is evaluated at the
// stage state (the midpoint for implicit midpoint steps).
using InputLaw = std::function<Eigen::VectorXd(double t, const Eigen::VectorXd& x)>;

InputLaw open_loop(const SignalSpec& u);

struct Trajectory {
  double t0 = 0.0;
  double h = 0.0;
  Method method = Method::kRk4;
  std::vector<std::string> state_names;

  std::vector<Eigen::VectorXd> x;      // N + 1 grid states
  std::vector<Eigen::VectorXd> u;      // input at the grid points
  std::vector<Eigen::VectorXd> y;      // natural output at the grid points
  std::vector<double> H;
  std::vector<Eigen::VectorXd> u_mid;  // midpoint runs: input used in step k
  std::vector<Eigen::VectorXd> ydot;   // IOH runs: differentiated output

  double newton_tolerance = kNewtonTolerance;
  int newton_max_iterations = kNewtonMaxIterations;
  int newton_iterations_worst = 0;
  long newton_iterations_total = 0;

  std::size_t steps() const { return x.empty() ? 0 : x.size() - 1; }
  double time(std::size_t k) const { return t0 + static_cast<double>(k) * h; }
};

// Fixed-step integration over [0, t_end] with N = round(t_end / h) steps.
// Domain errors during the run are rethrown with the failing time.
Trajectory simulate_phs(const PhsModel& model, const InputLaw& u, const Eigen::VectorXd& x0,
                        double t_end, double h, Method method);
Trajectory simulate_phs(const PhsModel& model, const SignalSpec& u, const Eigen::VectorXd& x0,
                        double t_end, double h, Method method);

Trajectory simulate_ioh(const IohModel& ioh, const InputLaw& u, const Eigen::VectorXd& x0,
                        double t_end, double h, Method method);
Trajectory simulate_ioh(const IohModel& ioh, const SignalSpec& u, const Eigen::VectorXd& x0,
                        double t_end, double h, Method method);

struct AuditReport {
  // H(x_N) - H(x_0) - integral of (u^T y - dissipation): midpoint rule for
  // midpoint runs, composite Simpson on the grid for RK4 runs.
  double balance_residual = 0.0;
  // max_k (Hdot_k - u_k^T y_k) with the analytic rate Hdot = grad H^T xdot.
  double passivity_margin = 0.0;
  double energy_drift = 0.0;  // max_k |H(x_k) - H(x_0)|
  double tolerance = kPassivityTolerance;
  bool passed = false;
};

// Integral of g(x, u) over the run with the audit quadrature.
double trajectory_integral(const Trajectory& traj,
                           const std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>& g);

AuditReport energy_audit(const Trajectory& traj, const PhsModel& model);
// IOH form: the supply rate is u^T ydot; no balance quadrature for RK4 runs
// beyond the same rules.
AuditReport energy_audit(const Trajectory& traj, const IohModel& ioh);

// Header t,x:<name>...,u:1..m,y:1..m,H; values printed with %.17g.
void write_csv(std::ostream& out, const Trajectory& traj);
void write_csv_file(const std::string& path, const Trajectory& traj);

// Rebuilds the grid from a CSV file. Midpoint runs get u_mid as the average
// of neighbouring grid inputs.
Trajectory read_csv(std::istream& in, Method method);
Trajectory read_csv_file(const std::string& path, Method method);

}  // namespace phkit
