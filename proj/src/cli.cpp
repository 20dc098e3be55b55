#include "phkit/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "phkit/analysis.hpp"
#include "phkit/dirac.hpp"
#include "phkit/energyport.hpp"
#include "phkit/io.hpp"
#include "phkit/linalg.hpp"
#include "phkit/netbuild.hpp"
#include "phkit/simulate.hpp"
#include "phkit/synthesis.hpp"

namespace phkit::cli {

namespace {

using io::Json;

inline constexpr double kBalanceTolerance = 1e-8;

class UsageError : public Error {
 public:
  using Error::Error;
};

Eigen::VectorXd parse_vector(const std::string& text, const std::string& flag) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(flag + ": \"" + item + "\" is not a number");
    }
  }
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Eigen::MatrixXd parse_matrix(const std::string& text, const std::string& flag) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const std::exception&) {
    throw UsageError(flag + ": expected a JSON array of rows");
  }
  return io::matrix_from_json(j, flag);
}

void require_size(const Eigen::VectorXd& v, Eigen::Index n, const std::string& flag) {
  if (v.size() != n)
    throw UsageError(flag + ": expected " + std::to_string(n) + " values, got " + std::to_string(v.size()));
}

SignalSpec parse_signal(const std::vector<std::string>& channels, Eigen::Index m) {
  if (channels.empty()) return SignalSpec::zero(m);
  if (static_cast<Eigen::Index>(channels.size()) != m)
    throw UsageError("--u: expected " + std::to_string(m) + " channels, got " + std::to_string(channels.size()));
  std::vector<Expr> exprs;
  for (const auto& c : channels) exprs.push_back(parse_expr(c, {"t"}));
  return SignalSpec::expressions(std::move(exprs));
}

std::vector<std::string> output_names(Eigen::Index m) {
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < m; ++i) names.push_back("y" + std::to_string(i + 1));
  return names;
}

// Display form: round-off below 1e-14 becomes zero.
Json clean_vector(const Eigen::VectorXd& v) {
  Eigen::VectorXd c = v;
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    if (std::abs(c(i)) < 1e-14) c(i) = 0.0;
  }
  return io::vector_json(c);
}

Json check(const std::string& name, bool passed, double value, double tolerance, const std::string& detail = {}) {
  return io::check_json(Check{name, passed, value, tolerance, detail});
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw UsageError("cannot write \"" + path + "\"");
  f << text;
}

int emit(std::ostream& out, const Json& report) {
  out << report.dump(2) << "\n";
  return report.value("passed", false) ? kExitPass : kExitCheckFailure;
}

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::uint64_t seed = kDefaultSeed;
  std::string command;
};

PhsModel load_phs(const std::string& path, std::uint64_t seed) { return io::load_model(path, seed).as_phs(); }

IohModel load_ioh(const std::string& path, std::uint64_t seed) {
  io::ModelFile f = io::load_model(path, seed);
  if (!f.ioh) throw UsageError("\"" + path + "\" is not an iohs model");
  return *f.ioh;
}

Json model_checks(const PhsModel& m, std::uint64_t seed) { return io::checks_json(validate_phs(m, seed)); }

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Port-Hamiltonian modelling, simulation and control toolkit", "phkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", io::kVersion);
  std::uint64_t seed = kDefaultSeed;
  app.add_option("--seed", seed, "seed for randomized checks")->capture_default_str();

  std::function<int(Context&)> handler;
  auto sub = [&](const std::string& name, const std::string& help) {
    CLI::App* s = app.add_subcommand(name, help);
    s->add_option("--seed", seed, "seed for randomized checks");
    return s;
  };

  // validate
  std::string model_path;
  auto* validate = sub("validate", "check the structure of a model file");
  validate->add_option("model", model_path)->required();
  validate->callback([&] {
    handler = [&](Context& c) {
      io::ModelFile f = io::load_model(model_path, c.seed);
      Json body{{"kind", f.kind}};
      Json checks;
      if (f.ioh) {
        checks = io::checks_json(validate_ioh(*f.ioh, c.seed));
        body["n"] = f.ioh->n();
        body["m"] = f.ioh->m();
      } else {
        const PhsModel m = f.as_phs();
        checks = model_checks(m, c.seed);
        if (f.extended) {
          for (auto& e : io::checks_json(validate_extended(*f.extended, default_samples(m.n(), c.seed))))
            checks.push_back(e);
        }
        body["n"] = m.n();
        body["m"] = m.m();
      }
      return emit(c.out, io::report(c.command, c.seed, checks, body));
    };
  });

  // simulate
  std::string x0_text, method_text = "midpoint", out_path;
  double t_end = 10.0, dt = 0.01;
  std::vector<std::string> u_channels;
  auto* simulate = sub("simulate", "integrate a model and write a CSV trajectory");
  simulate->add_option("model", model_path)->required();
  simulate->add_option("--x0", x0_text, "initial state, comma separated")->required();
  simulate->add_option("--t-end", t_end)->capture_default_str();
  simulate->add_option("--dt", dt)->capture_default_str();
  simulate->add_option("--method", method_text, "rk4 or midpoint")
      ->capture_default_str()
      ->check(CLI::IsMember({"rk4", "midpoint"}));
  simulate->add_option("--u", u_channels, "input channel expressions in t");
  simulate->add_option("--out", out_path, "CSV path (standard output when absent)");
  simulate->callback([&] {
    handler = [&](Context& c) {
      const Method method = parse_method(method_text);
      io::ModelFile f = io::load_model(model_path, c.seed);
      const Eigen::VectorXd x0 = parse_vector(x0_text, "--x0");
      Trajectory tr;
      if (f.ioh) {
        require_size(x0, f.ioh->n(), "--x0");
        tr = simulate_ioh(*f.ioh, parse_signal(u_channels, f.ioh->m()), x0, t_end, dt, method);
      } else {
        const PhsModel m = f.as_phs();
        require_size(x0, m.n(), "--x0");
        tr = simulate_phs(m, parse_signal(u_channels, m.m()), x0, t_end, dt, method);
      }
      if (out_path.empty()) {
        write_csv(c.out, tr);
        return kExitPass;
      }
      write_csv_file(out_path, tr);
      Json body{{"csv", out_path},
                {"method", to_string(method)},
                {"steps", tr.steps()},
                {"final_state", io::vector_json(tr.x.back())},
                {"final_energy", tr.H.back()}};
      if (method == Method::kMidpoint) body["newton_iterations_worst"] = tr.newton_iterations_worst;
      return emit(c.out, io::report(c.command, c.seed, Json::array(), body));
    };
  });

  // audit
  std::string csv_path;
  std::string audit_method = "midpoint";
  auto* audit = sub("audit", "energy-balance and passivity audit of a CSV trajectory");
  audit->add_option("trajectory", csv_path)->required();
  audit->add_option("model", model_path)->required();
  audit->add_option("--method", audit_method, "integrator that produced the trajectory")
      ->capture_default_str()
      ->check(CLI::IsMember({"rk4", "midpoint"}));
  audit->add_option("--u", u_channels, "input expressions in t, re-evaluated at step midpoints");
  audit->callback([&] {
    handler = [&](Context& c) {
      const Method method = parse_method(audit_method);
      io::ModelFile f = io::load_model(model_path, c.seed);
      Trajectory tr = read_csv_file(csv_path, method);
      const std::vector<std::string> names = f.ioh ? f.ioh->state : f.as_phs().state;
      if (tr.state_names != names) throw UsageError("trajectory state names do not match the model");
      if (!u_channels.empty() && method == Method::kMidpoint && !tr.u.empty()) {
        const SignalSpec u = parse_signal(u_channels, tr.u.front().size());
        tr.u_mid.resize(tr.steps());
        for (std::size_t k = 0; k < tr.steps(); ++k) tr.u_mid[k] = u.at(tr.t0 + (static_cast<double>(k) + 0.5) * tr.h);
      }
      const AuditReport a = f.ioh ? energy_audit(tr, *f.ioh) : energy_audit(tr, f.as_phs());
      Json checks = Json::array({check("passivity margin", a.passed, a.passivity_margin, a.tolerance)});
      if (method == Method::kMidpoint)
        checks.push_back(check("energy balance", std::abs(a.balance_residual) <= kBalanceTolerance, a.balance_residual,
                               kBalanceTolerance));
      Json body{{"balance_residual", a.balance_residual}, {"energy_drift", a.energy_drift},
                {"steps", tr.steps()}, {"method", to_string(method)}};
      c.err << "balance residual " << format_number(a.balance_residual) << "\n";
      return emit(c.out, io::report(c.command, c.seed, checks, body));
    };
  });

  // steady
  std::string u_text, guess_text;
  auto* steady = sub("steady", "steady state and shifted passivity data for a constant input");
  steady->add_option("model", model_path)->required();
  steady->add_option("--u", u_text, "constant input, comma separated")->required();
  steady->add_option("--guess", guess_text, "initial guess (default zero)");
  steady->callback([&] {
    handler = [&](Context& c) {
      const PhsModel m = load_phs(model_path, c.seed);
      const Eigen::VectorXd u = parse_vector(u_text, "--u");
      require_size(u, m.m(), "--u");
      Eigen::VectorXd guess = Eigen::VectorXd::Zero(m.n());
      if (!guess_text.empty()) {
        guess = parse_vector(guess_text, "--guess");
        require_size(guess, m.n(), "--guess");
      }
      const SteadyState ss = steady_state(m, u, guess);
      const ShiftedSystem sh = shifted_system(m, ss, c.seed);
      const double tol = kSteadyStateTolerance * (1.0 + (m.G.constant_value() * u).norm());
      Json checks = Json::array({check("steady-state residual", ss.residual <= tol, ss.residual, tol),
                                 check("shifted field identity", sh.identity_residual <= kStructureTolerance,
                                       sh.identity_residual, kStructureTolerance)});
      Json body{{"x_bar", clean_vector(ss.x_bar)},
                {"y_bar", clean_vector(ss.y_bar)},
                {"closed_form", ss.closed_form},
                {"hessian_min_eigenvalue", sh.min_hessian_eigenvalue},
                {"convexity", to_string(sh.convexity)},
                {"shifted_hamiltonian", io::hamiltonian_json(sh.model.H, m.state)}};
      return emit(c.out, io::report(c.command, c.seed, checks, body));
    };
  });

  // casimir
  std::vector<std::string> verify_exprs;
  std::string phi_text, target_text;
  auto* casimir = sub("casimir", "linear Casimirs, Casimir checks and energy-Casimir candidates");
  casimir->add_option("model", model_path)->required();
  casimir->add_option("--verify", verify_exprs, "candidate Casimir expressions over the state");
  casimir->add_option("--phi", phi_text, "composition over z0 (energy), z1..zk (basis Casimirs)");
  casimir->add_option("--target", target_text, "target state for --phi");
  casimir->callback([&] {
    handler = [&](Context& c) {
      const PhsModel m = load_phs(model_path, c.seed);
      const CasimirBasis basis = linear_casimirs(m);
      Json checks = Json::array();
      Json covectors = Json::array();
      for (std::size_t i = 0; i < basis.size(); ++i) {
        covectors.push_back(clean_vector(basis.covectors[i]));
        const double r = std::max(basis.j_residuals[i], basis.r_residuals[i]);
        checks.push_back(check("casimir " + std::to_string(i + 1), r <= kCasimirBasisTolerance, r,
                               kCasimirBasisTolerance));
      }
      Json body{{"basis", covectors}};
      const auto samples = default_samples(m.n(), c.seed);
      for (const auto& src : verify_exprs) {
        const CasimirReport rep = verify_casimir(m, parse_expr(src, m.state), samples);
        checks.push_back(check("verify " + src, rep.passed, std::max(rep.j_residual, rep.r_residual), rep.tolerance));
      }
      if (!phi_text.empty()) {
        if (target_text.empty()) throw UsageError("--phi needs --target");
        const Eigen::VectorXd target = parse_vector(target_text, "--target");
        require_size(target, m.n(), "--target");
        std::vector<std::string> z;
        for (std::size_t i = 0; i <= basis.size(); ++i) z.push_back("z" + std::to_string(i));
        const auto res = energy_casimir_candidate(m, basis, parse_expr(phi_text, z), target, c.seed);
        checks.push_back(check("energy-Casimir minimum", res.report.accepted, res.report.gradient_norm,
                               kCandidateGradientTolerance, res.report.reason));
        body["candidate"] = {{"V", res.candidate.V.to_string()},
                             {"gradient_norm", res.report.gradient_norm},
                             {"hessian_min_eigenvalue", res.report.min_hessian_eigenvalue},
                             {"dphi_dz0", res.report.dphi_dz0},
                             {"max_increase", res.report.max_increase}};
      }
      return emit(c.out, io::report(c.command, c.seed, checks, body));
    };
  });

  // compose
  std::string compose_kind, second_path, jint_text;
  auto* compose = sub("compose", "power-preserving interconnection of two PHS models");
  compose->add_option("kind", compose_kind, "negative or jint")
      ->required()
      ->check(CLI::IsMember({"negative", "jint"}));
  compose->add_option("first", model_path)->required();
  compose->add_option("second", second_path)->required();
  compose->add_option("--jint", jint_text, "interconnection matrix as JSON rows (jint)");
  compose->add_option("--out", out_path, "write the closed-loop model here");
  compose->callback([&] {
    handler = [&](Context& c) {
      const PhsModel a = load_phs(model_path, c.seed);
      const PhsModel b = load_phs(second_path, c.seed);
      ClosedLoopPhs cl;
      if (compose_kind == "negative") {
        cl = negative_feedback(a, b);
      } else {
        if (jint_text.empty()) throw UsageError("jint composition needs --jint");
        cl = interconnect_jint(a, b, MatrixField::constant(parse_matrix(jint_text, "--jint"), {}));
      }
      const Json model = io::to_json(cl.model);
      if (!out_path.empty()) write_text(out_path, model.dump(2) + "\n");
      Json body{{"interconnection", cl.kind}, {"model", model}};
      return emit(c.out, io::report(c.command, c.seed, model_checks(cl.model, c.seed), body));
    };
  });

  // synth-ci
  std::string lambda_text, x0_ci;
  double damping = 1.0, horizon = 30.0;
  auto* synth_ci = sub("synth-ci", "control by interconnection: Casimirs, shaping, damping injection");
  synth_ci->add_option("plant", model_path)->required();
  synth_ci->add_option("controller", second_path)->required();
  synth_ci->add_option("--lambda", lambda_text, "Casimir levels (default zero)");
  synth_ci->add_option("--target", target_text, "equilibrium for the damping audit (default: minimizer of H_s)");
  synth_ci->add_option("--damping", damping, "damping gain c")->capture_default_str();
  synth_ci->add_option("--x0", x0_ci, "initial plant state for the convergence audit (default zero)");
  synth_ci->add_option("--t-end", horizon, "audit horizon")->capture_default_str();
  synth_ci->add_option("--dt", dt)->capture_default_str();
  synth_ci->callback([&] {
    handler = [&](Context& c) {
      const PhsModel plant = load_phs(model_path, c.seed);
      const PhsModel ctrl = load_phs(second_path, c.seed);
      const CasimirSearchResult res = closedloop_casimir_search(plant, ctrl);
      Json cas = Json::array();
      for (const auto& k : res.casimirs)
        cas.push_back({{"index", k.index}, {"F", clean_vector(k.F_row)}, {"j_residual", k.j_residual},
                       {"r_residual", k.r_residual}});
      Json r_res = Json::array();
      for (const auto& r : res.obstacle.r_residuals) r_res.push_back(r ? Json(*r) : Json(nullptr));
      Json body{{"casimirs", cas},
                {"obstacle",
                 {{"flag", res.obstacle.obstacle}, {"r_residuals", r_res}, {"detail", res.obstacle.detail}}}};
      Json checks = Json::array({check("closed-loop Casimirs", res.F().has_value(),
                                       static_cast<double>(res.casimirs.size()), static_cast<double>(ctrl.n()),
                                       res.obstacle.detail)});
      if (!res.F()) return emit(c.out, io::report(c.command, c.seed, checks, body));

      Eigen::VectorXd lambda = Eigen::VectorXd::Zero(ctrl.n());
      if (!lambda_text.empty()) {
        lambda = parse_vector(lambda_text, "--lambda");
        require_size(lambda, ctrl.n(), "--lambda");
      }
      const FeedbackLaw shaping = reduce_to_state_feedback(plant, ctrl, *res.F(), lambda);
      Json fb{{"kind", to_string(shaping.kind)},
              {"shaped_hamiltonian", io::hamiltonian_json(*shaping.shaped, plant.state)},
              {"identity_residual", shaping.identity_residual}};
      if (shaping.gain) {
        fb["gain"] = io::matrix_json(*shaping.gain);
        fb["offset"] = clean_vector(*shaping.offset);
      }
      body["feedback"] = fb;
      checks.push_back(check("shaping identity", shaping.identity_residual <= kSynthesisTolerance,
                             shaping.identity_residual, kSynthesisTolerance));

      Eigen::VectorXd target;
      if (!target_text.empty()) {
        target = parse_vector(target_text, "--target");
        require_size(target, plant.n(), "--target");
      } else if (shaping.shaped->is_quadratic() &&
                 linalg::min_symmetric_eigenvalue(shaping.shaped->quadratic_form().Q) > linalg::kRankTolerance) {
        const auto& q = shaping.shaped->quadratic_form();
        target = -q.Q.ldlt().solve(q.b.size() == 0 ? Eigen::VectorXd(Eigen::VectorXd::Zero(plant.n())) : q.b);
      } else {
        throw UsageError("the shaped energy has no unique minimizer; pass --target");
      }
      const auto cand = energy_casimir_candidate(*shaping.shaped_model, std::vector<Expr>{},
                                                 parse_expr("z0", {"z0"}), target, c.seed);
      checks.push_back(check("minimum at target", cand.report.accepted, cand.report.min_hessian_eigenvalue,
                             kCandidateHessianTolerance, cand.report.reason));
      body["target"] = clean_vector(target);
      if (!cand.report.accepted) return emit(c.out, io::report(c.command, c.seed, checks, body));

      const FeedbackLaw inj = damping_injection(*shaping.shaped_model, cand.candidate, damping);
      const FeedbackLaw total = combine(shaping, inj);
      Eigen::VectorXd x0 = Eigen::VectorXd::Zero(plant.n());
      if (!x0_ci.empty()) {
        x0 = parse_vector(x0_ci, "--x0");
        require_size(x0, plant.n(), "--x0");
      }
      const ConvergenceAudit a = audit_convergence(plant, total, cand.candidate, x0, horizon, dt);
      Json damp{{"c", damping}};
      if (total.gain) {
        damp["total_gain"] = io::matrix_json(*total.gain);
        damp["total_offset"] = clean_vector(*total.offset);
      }
      damp["final_error"] = a.final_error;
      damp["max_increase"] = a.max_increase;
      body["damping"] = damp;
      checks.push_back(check("Lyapunov decrease", a.max_increase <= kLyapunovTolerance, a.max_increase,
                             kLyapunovTolerance));
      checks.push_back(check("convergence", a.final_error < a.tolerance, a.final_error, a.tolerance));
      return emit(c.out, io::report(c.command, c.seed, checks, body));
    };
  });

  // synth-ida
  std::string jd_text, rd_text, qs_text, bs_text;
  auto* synth_ida = sub("synth-ida", "linear-quadratic IDA-PBC");
  synth_ida->add_option("plant", model_path)->required();
  synth_ida->add_option("--Jd", jd_text, "assigned interconnection, JSON rows")->required();
  synth_ida->add_option("--Rd", rd_text, "assigned damping, JSON rows")->required();
  synth_ida->add_option("--Qs", qs_text, "target energy Hessian, JSON rows")->required();
  synth_ida->add_option("--bs", bs_text, "target energy linear term, comma separated");
  synth_ida->callback([&] {
    handler = [&](Context& c) {
      const PhsModel plant = load_phs(model_path, c.seed);
      const Eigen::MatrixXd Jd = parse_matrix(jd_text, "--Jd");
      const Eigen::MatrixXd Rd = parse_matrix(rd_text, "--Rd");
      const Eigen::MatrixXd Qs = parse_matrix(qs_text, "--Qs");
      Eigen::VectorXd bs = Eigen::VectorXd::Zero(Qs.rows());
      if (!bs_text.empty()) bs = parse_vector(bs_text, "--bs");
      require_size(bs, Qs.rows(), "--bs");
      if (Qs.rows() != Qs.cols() || Qs.rows() != plant.n()) throw UsageError("--Qs must be n x n");
      try {
        const IdaPbcResult res = ida_pbc_linear(plant, Jd, Rd, Hamiltonian::quadratic(Qs, bs), c.seed);
        Json checks = Json::array({check("matching equation", true, res.matching_residual, kSynthesisTolerance),
                                   check("closed-loop field", res.field_residual <= kSynthesisTolerance,
                                         res.field_residual, kSynthesisTolerance)});
        Json body{{"feedback",
                   {{"kind", to_string(res.law.kind)}, {"gain", io::matrix_json(*res.law.gain)},
                    {"offset", clean_vector(*res.law.offset)}}},
                  {"annihilator", io::matrix_json(res.annihilator)}};
        return emit(c.out, io::report(c.command, c.seed, checks, body));
      } catch (const MatchingError& e) {
        Json checks = Json::array({check("matching equation", false, e.residual(), kSynthesisTolerance)});
        return emit(c.out, io::report(c.command, c.seed, checks,
                                      {{"residual_matrix", io::matrix_json(e.residual_matrix())}}));
      }
    };
  });

  // ioh-convert
  std::vector<std::string> c_exprs;
  auto* ioh_convert = sub("ioh-convert", "convert between input-output Hamiltonian and PHS forms");
  ioh_convert->add_option("model", model_path)->required();
  ioh_convert->add_option("--C", c_exprs, "output map expressions (PHS to IOH direction)");
  ioh_convert->add_option("--out", out_path, "write the converted model here");
  ioh_convert->callback([&] {
    handler = [&](Context& c) {
      io::ModelFile f = io::load_model(model_path, c.seed);
      Json model, checks;
      if (f.ioh) {
        const ExtendedPhsModel ext = ioh_to_phs(*f.ioh);
        model = io::to_json(ext);
        checks = io::checks_json(validate_extended(ext, default_samples(ext.base.n(), c.seed)));
      } else {
        if (c_exprs.empty()) throw UsageError("converting a PHS model needs --C");
        const PhsModel base = f.as_phs();
        std::vector<Expr> C;
        for (const auto& s : c_exprs) C.push_back(parse_expr(s, base.state));
        try {
          const IohModel ioh = f.extended ? phs_to_ioh(*f.extended, C, c.seed) : phs_to_ioh(base, C, c.seed);
          model = io::to_json(ioh);
          checks = io::checks_json(validate_ioh(ioh, c.seed));
        } catch (const CheckFailure& e) {
          checks = Json::array({check(e.check(), false, e.residual(), kIohConditionTolerance)});
          return emit(c.out, io::report(c.command, c.seed, checks));
        }
      }
      if (!out_path.empty()) write_text(out_path, model.dump(2) + "\n");
      return emit(c.out, io::report(c.command, c.seed, checks, {{"model", model}}));
    };
  });

  // ioh-feedback
  std::string fb_kind, p_text;
  auto* ioh_feedback = sub("ioh-feedback", "energy-port interconnections of IOH models");
  ioh_feedback->add_option("kind", fb_kind, "positive, static or general-p")
      ->required()
      ->check(CLI::IsMember({"positive", "static", "general-p"}));
  ioh_feedback->add_option("first", model_path)->required();
  ioh_feedback->add_option("second", second_path, "second model (positive, general-p)");
  ioh_feedback->add_option("--P", p_text, "shaping function over y1..yk");
  ioh_feedback->add_option("--out", out_path, "write the closed-loop model here");
  ioh_feedback->callback([&] {
    handler = [&](Context& c) {
      const IohModel a = load_ioh(model_path, c.seed);
      IohModel cl;
      std::string convention;
      if (fb_kind == "static") {
        if (p_text.empty()) throw UsageError("static feedback needs --P");
        cl = static_energy_feedback(a, parse_expr(p_text, output_names(a.m())));
        convention = cl.metadata["interconnection"];
      } else {
        if (second_path.empty()) throw UsageError(fb_kind + " feedback needs a second model");
        const IohModel b = load_ioh(second_path, c.seed);
        IohInterconnection r;
        if (fb_kind == "positive") {
          r = positive_feedback(a, b);
        } else {
          if (p_text.empty()) throw UsageError("general-p feedback needs --P");
          r = general_p_feedback(a, b, parse_expr(p_text, output_names(a.m() + b.m())));
        }
        cl = r.model;
        convention = r.convention;
      }
      const Json model = io::to_json(cl);
      if (!out_path.empty()) write_text(out_path, model.dump(2) + "\n");
      return emit(c.out, io::report(c.command, c.seed, io::checks_json(validate_ioh(cl, c.seed)),
                                    {{"convention", convention}, {"model", model}}));
    };
  });

  // dcgain
  auto* dcgain = sub("dcgain", "dc loop gain stability test for two linear IOH systems");
  dcgain->add_option("first", model_path)->required();
  dcgain->add_option("second", second_path)->required();
  dcgain->callback([&] {
    handler = [&](Context& c) {
      const StabilityReport r = dc_loop_gain_stability(load_ioh(model_path, c.seed), load_ioh(second_path, c.seed));
      Json checks = Json::array({check("verdicts agree", r.agrees(), r.loop_gain, kMarginalTolerance)});
      Json body{{"dc_gain_1", io::matrix_json(r.dc_gain_1)},
                {"dc_gain_2", io::matrix_json(r.dc_gain_2)},
                {"loop_gain", r.loop_gain},
                {"hessian", io::matrix_json(r.hessian)},
                {"min_eigenvalue", r.min_eigenvalue},
                {"verdict", to_string(r.verdict)},
                {"loop_verdict", to_string(r.loop_verdict)}};
      return emit(c.out, io::report(c.command, c.seed, checks, body));
    };
  });

  // net-msd
  auto* net_msd = sub("net-msd", "assemble a mass-spring-damper network model");
  net_msd->add_option("graph", model_path)->required();
  net_msd->add_option("--out", out_path, "write the PHS model here");
  net_msd->callback([&] {
    handler = [&](Context& c) {
      io::ModelFile f = io::load_model(model_path, c.seed);
      if (!f.graph) throw UsageError("\"" + model_path + "\" is not an msd-graph file");
      const PhsModel m = build_msd(*f.graph);
      const Json model = io::to_json(m);
      if (!out_path.empty()) write_text(out_path, model.dump(2) + "\n");
      return emit(c.out, io::report(c.command, c.seed, model_checks(m, c.seed), {{"model", model}}));
    };
  });

  // dirac
  std::string dirac_action;
  std::vector<std::string> pairs;
  auto* dirac = sub("dirac", "verify or compose constant Dirac structures");
  dirac->add_option("action", dirac_action, "verify or compose")
      ->required()
      ->check(CLI::IsMember({"verify", "compose"}));
  dirac->add_option("first", model_path)->required();
  dirac->add_option("second", second_path, "second structure (compose)");
  dirac->add_option("--pair", pairs, "shared ports as a:b");
  dirac->add_option("--out", out_path, "write the composed structure here");
  dirac->callback([&] {
    handler = [&](Context& c) {
      const DiracStructure a = io::dirac_from_json(io::read_json_file(model_path));
      DiracStructure d = a;
      Json body = Json::object();
      if (dirac_action == "compose") {
        if (second_path.empty()) throw UsageError("compose needs a second structure");
        const DiracStructure b = io::dirac_from_json(io::read_json_file(second_path));
        PortPairing pairing;
        for (const auto& p : pairs) {
          const auto colon = p.find(':');
          if (colon == std::string::npos) throw UsageError("--pair expects a:b, got \"" + p + "\"");
          pairing.emplace_back(p.substr(0, colon), p.substr(colon + 1));
        }
        d = phkit::compose(a, b, pairing);
        body["structure"] = io::to_json(d);
        if (!out_path.empty()) write_text(out_path, body["structure"].dump(2) + "\n");
      }
      const DiracReport r = verify_dirac(d);
      Json checks = Json::array(
          {check("rank", r.rank_ok, static_cast<double>(r.rank), static_cast<double>(r.k)),
           check("structure", r.structure_residual <= kDiracTolerance, r.structure_residual, kDiracTolerance),
           check("power", r.power_residual <= kDiracTolerance, r.power_residual, kDiracTolerance)});
      return emit(c.out, io::report(c.command, c.seed, checks, body));
    };
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitPass : kExitUsage;
  }

  Context ctx{out, err, seed, ""};
  for (const auto* s : app.get_subcommands()) ctx.command = s->get_name();
  try {
    return handler(ctx);
  } catch (const io::ValidationFailure& e) {
    emit(out, io::report(ctx.command, ctx.seed, io::checks_json(e.report()), {{"error", e.what()}}));
    return kExitCheckFailure;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const io::SchemaError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UndeclaredVariableError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "failed: " << e.what() << "\n";
    return kExitCheckFailure;
  } catch (const std::exception& e) {
    err << "failed: " << e.what() << "\n";
    return kExitCheckFailure;
  }
}

}  // namespace phkit::cli
