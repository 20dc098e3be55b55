#include "phkit/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace phkit::io {

namespace {

std::string child(const std::string& path, const std::string& key) { return path + "/" + key; }
std::string child(const std::string& path, std::size_t index) { return path + "/" + std::to_string(index); }

const Json& member(const Json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw SchemaError(path, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(child(path, key), "missing required member");
  return *it;
}

const Json* optional_member(const Json& obj, const std::string& key) {
  const auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

double number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw SchemaError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw SchemaError(path, "number is not finite");
  return v;
}

std::string string_value(const Json& j, const std::string& path) {
  if (!j.is_string()) throw SchemaError(path, "expected a string");
  return j.get<std::string>();
}

const Json& array(const Json& j, const std::string& path) {
  if (!j.is_array()) throw SchemaError(path, "expected an array");
  return j;
}

Expr expression(const Json& j, const std::string& path, const std::vector<std::string>& vars) {
  const std::string src = string_value(j, path);
  try {
    return parse_expr(src, vars);
  } catch (const ParseError& e) {
    throw SchemaError(path, e.what());
  } catch (const UndeclaredVariableError& e) {
    throw SchemaError(path, e.what());
  }
}

std::vector<std::string> name_list(const Json& j, const std::string& path) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < array(j, path).size(); ++i) out.push_back(string_value(j[i], child(path, i)));
  return out;
}

std::vector<std::string> state_list(const Json& j, const std::string& path) {
  std::vector<std::string> out = name_list(j, path);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!is_identifier(out[i])) throw SchemaError(child(path, i), "\"" + out[i] + "\" is not a valid name");
    for (std::size_t k = 0; k < i; ++k) {
      if (out[k] == out[i]) throw SchemaError(child(path, i), "duplicate name \"" + out[i] + "\"");
    }
  }
  return out;
}

// Number of columns of a row-major array of arrays; an empty outer array
// gives `fallback`.
Eigen::Index column_count(const Json& j, const std::string& path, Eigen::Index fallback) {
  if (array(j, path).empty()) return fallback;
  return static_cast<Eigen::Index>(array(j[0], child(path, 0)).size());
}

MatrixField field(const Json& j, const std::string& path, const std::vector<std::string>& vars, Eigen::Index rows,
                  Eigen::Index cols) {
  array(j, path);
  if (static_cast<Eigen::Index>(j.size()) != rows && !(rows > 0 && j.empty() && cols == 0))
    throw SchemaError(path, "expected " + std::to_string(rows) + " rows, found " + std::to_string(j.size()));
  MatrixField f(rows, cols, vars);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const std::string rp = child(path, r);
    if (static_cast<Eigen::Index>(array(j[r], rp).size()) != cols)
      throw SchemaError(rp, "expected " + std::to_string(cols) + " columns, found " + std::to_string(j[r].size()));
    for (std::size_t c = 0; c < j[r].size(); ++c) {
      const std::string ep = child(rp, c);
      const Json& e = j[r][c];
      if (e.is_number()) {
        f.set(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c), number(e, ep));
      } else if (e.is_string()) {
        f.set(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c), expression(e, ep, vars));
      } else {
        throw SchemaError(ep, "expected a number or an expression string");
      }
    }
  }
  return f;
}

Eigen::VectorXd vector_from_json(const Json& j, const std::string& path, Eigen::Index n) {
  array(j, path);
  if (static_cast<Eigen::Index>(j.size()) != n)
    throw SchemaError(path, "expected " + std::to_string(n) + " entries, found " + std::to_string(j.size()));
  Eigen::VectorXd v(n);
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], child(path, i));
  return v;
}

Hamiltonian hamiltonian(const Json& j, const std::string& path, const std::vector<std::string>& vars) {
  const auto n = static_cast<Eigen::Index>(vars.size());
  if (!j.is_object()) throw SchemaError(path, "expected an object with \"quadratic\" or \"expr\"");
  if (const Json* q = optional_member(j, "quadratic")) {
    const std::string qp = child(path, "quadratic");
    const Eigen::MatrixXd Q = matrix_from_json(member(*q, "Q", qp), child(qp, "Q"), n, n);
    if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 0.0 && n > 0)
      throw SchemaError(child(qp, "Q"), "Q must be symmetric");
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    if (const Json* bj = optional_member(*q, "b")) b = vector_from_json(*bj, child(qp, "b"), n);
    double c = 0.0;
    if (const Json* cj = optional_member(*q, "c")) c = number(*cj, child(qp, "c"));
    return Hamiltonian::quadratic(Q, b, c);
  }
  if (const Json* e = optional_member(j, "expr"))
    return Hamiltonian::expression(expression(*e, child(path, "expr"), vars));
  throw SchemaError(path, "expected \"quadratic\" or \"expr\"");
}

std::vector<Expr> outputs(const Json& j, const std::string& path, const std::vector<std::string>& vars) {
  std::vector<Expr> out;
  for (std::size_t i = 0; i < array(j, path).size(); ++i) out.push_back(expression(j[i], child(path, i), vars));
  return out;
}

Json entry_json(const MatrixField::Entry& e) {
  if (const double* d = std::get_if<double>(&e)) return *d + 0.0;
  return std::get<Expr>(e).to_string();
}

std::string kind_of(const Json& doc) {
  const Json* k = optional_member(doc, "kind");
  return k == nullptr ? "phs" : string_value(*k, "/kind");
}

}  // namespace

PhsModel ModelFile::as_phs() const {
  if (phs) return *phs;
  if (extended) return extended->base;
  if (graph) return build_msd(*graph);
  if (ioh) return ioh_to_phs(*ioh).base;
  throw PreconditionError("empty model file");
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("", "cannot open \"" + path + "\"");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("", std::string("invalid JSON in \"") + path + "\": " + e.what());
  }
}

Eigen::MatrixXd matrix_from_json(const Json& j, const std::string& path, Eigen::Index rows, Eigen::Index cols) {
  array(j, path);
  const auto r = static_cast<Eigen::Index>(j.size());
  if (rows >= 0 && r != rows && !(j.empty() && cols == 0))
    throw SchemaError(path, "expected " + std::to_string(rows) + " rows, found " + std::to_string(r));
  const Eigen::Index c = cols >= 0 ? cols : column_count(j, path, 0);
  Eigen::MatrixXd m(rows >= 0 ? rows : r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const std::string rp = child(path, static_cast<std::size_t>(i));
    const Json& row = array(j[static_cast<std::size_t>(i)], rp);
    if (static_cast<Eigen::Index>(row.size()) != c)
      throw SchemaError(rp, "expected " + std::to_string(c) + " columns, found " + std::to_string(row.size()));
    for (Eigen::Index k = 0; k < c; ++k) m(i, k) = number(row[static_cast<std::size_t>(k)], child(rp, k));
  }
  return m;
}

PhsModel phs_from_json(const Json& doc, const std::string& path) {
  const auto state = state_list(member(doc, "state", path), child(path, "state"));
  const auto n = static_cast<Eigen::Index>(state.size());
  const Json& gj = member(doc, "G", path);
  const Eigen::Index m = column_count(gj, child(path, "G"), 0);
  MatrixField J = field(member(doc, "J", path), child(path, "J"), state, n, n);
  MatrixField R = optional_member(doc, "R") ? field(doc["R"], child(path, "R"), state, n, n)
                                             : MatrixField::zero(n, n, state);
  MatrixField G = field(gj, child(path, "G"), state, n, m);
  Hamiltonian H = hamiltonian(member(doc, "hamiltonian", path), child(path, "hamiltonian"), state);
  std::optional<Rayleigh> rayleigh;
  if (const Json* rj = optional_member(doc, "rayleigh")) {
    const std::string rp = child(path, "rayleigh");
    const Json& grj = member(*rj, "GR", rp);
    const Eigen::Index r = column_count(grj, child(rp, "GR"), 0);
    std::vector<std::string> flows;
    if (const Json* fj = optional_member(*rj, "flows")) {
      flows = state_list(*fj, child(rp, "flows"));
    } else {
      for (Eigen::Index i = 0; i < r; ++i) flows.push_back("f" + std::to_string(i + 1));
    }
    if (static_cast<Eigen::Index>(flows.size()) != r) throw SchemaError(child(rp, "flows"), "one name per GR column");
    rayleigh = Rayleigh{field(grj, child(rp, "GR"), state, n, r),
                        expression(member(*rj, "expr", rp), child(rp, "expr"), flows)};
  }
  PhsModel model = make_phs(state, J, R, G, H, rayleigh);
  if (const Json* md = optional_member(doc, "metadata")) {
    if (!md->is_object()) throw SchemaError(child(path, "metadata"), "expected an object");
    for (const auto& [k, v] : md->items()) model.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  if (const Json* name = optional_member(doc, "name"))
    model.metadata["name"] = string_value(*name, child(path, "name"));
  return model;
}

IohModel ioh_from_json(const Json& doc, const std::string& path) {
  const auto state = state_list(member(doc, "state", path), child(path, "state"));
  const auto n = static_cast<Eigen::Index>(state.size());
  MatrixField J = field(member(doc, "J", path), child(path, "J"), state, n, n);
  MatrixField R = optional_member(doc, "R") ? field(doc["R"], child(path, "R"), state, n, n)
                                             : MatrixField::zero(n, n, state);
  Hamiltonian H = hamiltonian(member(doc, "hamiltonian", path), child(path, "hamiltonian"), state);
  IohModel ioh = make_ioh(state, J, R, H, outputs(member(doc, "C", path), child(path, "C"), state));
  if (const Json* name = optional_member(doc, "name")) ioh.metadata["name"] = string_value(*name, child(path, "name"));
  return ioh;
}

MsdGraph msd_from_json(const Json& doc, const std::string& path) {
  MsdGraph g;
  const std::string np = child(path, "nodes");
  const Json& nodes = array(member(doc, "nodes", path), np);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string ip = child(np, i);
    g.nodes.push_back({string_value(member(nodes[i], "name", ip), child(ip, "name")),
                       number(member(nodes[i], "mass", ip), child(ip, "mass"))});
  }
  auto edges = [&](const char* key, const char* coeff, std::vector<MsdEdge>& out) {
    const Json* list = optional_member(doc, key);
    if (list == nullptr) return;
    const std::string lp = child(path, key);
    for (std::size_t i = 0; i < array(*list, lp).size(); ++i) {
      const std::string ip = child(lp, i);
      const Json& e = (*list)[i];
      out.push_back({string_value(member(e, "from", ip), child(ip, "from")),
                     string_value(member(e, "to", ip), child(ip, "to")),
                     number(member(e, coeff, ip), child(ip, coeff))});
    }
  };
  edges("springs", "k", g.springs);
  edges("dampers", "d", g.dampers);
  if (const Json* a = optional_member(doc, "actuated")) g.actuated = name_list(*a, child(path, "actuated"));
  return g;
}

ModelFile parse_model(const Json& doc, std::uint64_t seed) {
  if (!doc.is_object()) throw SchemaError("", "expected an object");
  ModelFile file;
  file.kind = kind_of(doc);
  if (file.kind == "phs") {
    PhsModel model = phs_from_json(doc);
    ValidationReport rep = validate_phs(model, seed);
    if (!rep.passed()) throw ValidationFailure(std::move(rep));
    if (const Json* ext = optional_member(doc, "extended")) {
      const std::string ep = "/extended";
      const auto n = model.n();
      const auto m = model.m();
      ExtendedPhsModel e{model, field(member(*ext, "P", ep), child(ep, "P"), model.state, n, m),
                         field(member(*ext, "M", ep), child(ep, "M"), model.state, m, m),
                         field(member(*ext, "S", ep), child(ep, "S"), model.state, m, m)};
      if (model.rayleigh) throw SchemaError(ep, "the extended form does not combine with Rayleigh dissipation");
      ValidationReport erep = validate_extended(e, default_samples(n, seed));
      if (!erep.passed()) throw ValidationFailure(std::move(erep));
      file.extended = std::move(e);
    }
    file.phs = std::move(model);
  } else if (file.kind == "iohs") {
    IohModel ioh = ioh_from_json(doc);
    ValidationReport rep = validate_ioh(ioh, seed);
    if (!rep.passed()) throw ValidationFailure(std::move(rep));
    file.ioh = std::move(ioh);
  } else if (file.kind == "msd-graph") {
    MsdGraph g = msd_from_json(doc);
    try {
      g.validate();
    } catch (const PreconditionError& e) {
      throw SchemaError("", e.what());
    }
    file.graph = std::move(g);
  } else {
    throw SchemaError("/kind", "unknown kind \"" + file.kind + "\" (expected phs, iohs or msd-graph)");
  }
  return file;
}

ModelFile load_model(const std::string& path, std::uint64_t seed) { return parse_model(read_json_file(path), seed); }

Json matrix_json(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j) + 0.0);
    out.push_back(std::move(row));
  }
  return out;
}

Json vector_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i) + 0.0);
  return out;
}

Json field_json(const MatrixField& f) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < f.cols(); ++j) row.push_back(entry_json(f.at(i, j)));
    out.push_back(std::move(row));
  }
  return out;
}

Json hamiltonian_json(const Hamiltonian& h, const std::vector<std::string>& state) {
  if (!h.is_quadratic()) return Json{{"expr", h.expr().rebind(state).to_string()}};
  const auto& q = h.quadratic_form();
  const Eigen::VectorXd b = q.b.size() == 0 ? Eigen::VectorXd(Eigen::VectorXd::Zero(q.Q.rows())) : q.b;
  return Json{{"quadratic", {{"Q", matrix_json(q.Q)}, {"b", vector_json(b)}, {"c", q.c}}}};
}

Json to_json(const PhsModel& model) {
  Json out{{"kind", "phs"},
           {"state", model.state},
           {"J", field_json(model.J)},
           {"R", field_json(model.R)},
           {"G", field_json(model.G)},
           {"hamiltonian", hamiltonian_json(model.H, model.state)}};
  if (model.rayleigh) {
    out["rayleigh"] = {{"GR", field_json(model.rayleigh->GR)},
                       {"flows", model.rayleigh->function.variables()},
                       {"expr", model.rayleigh->function.to_string()}};
  }
  if (!model.metadata.empty()) out["metadata"] = model.metadata;
  return out;
}

Json to_json(const ExtendedPhsModel& model) {
  Json out = to_json(model.base);
  out["extended"] = {{"P", field_json(model.P)}, {"M", field_json(model.M)}, {"S", field_json(model.S)}};
  return out;
}

Json to_json(const IohModel& model) {
  Json C = Json::array();
  for (const auto& c : model.C) C.push_back(c.to_string());
  Json out{{"kind", "iohs"},
           {"state", model.state},
           {"J", field_json(model.J)},
           {"R", field_json(model.R)},
           {"hamiltonian", hamiltonian_json(model.H, model.state)},
           {"C", C}};
  if (!model.metadata.empty()) out["metadata"] = model.metadata;
  return out;
}

Json to_json(const MsdGraph& graph) {
  Json nodes = Json::array(), springs = Json::array(), dampers = Json::array();
  for (const auto& n : graph.nodes) nodes.push_back({{"name", n.name}, {"mass", n.mass}});
  for (const auto& e : graph.springs) springs.push_back({{"from", e.from}, {"to", e.to}, {"k", e.coefficient}});
  for (const auto& e : graph.dampers) dampers.push_back({{"from", e.from}, {"to", e.to}, {"d", e.coefficient}});
  return Json{{"kind", "msd-graph"}, {"nodes", nodes}, {"springs", springs}, {"dampers", dampers},
              {"actuated", graph.actuated}};
}

DiracStructure dirac_from_json(const Json& doc, const std::string& path) {
  std::vector<PortGroup> ports;
  if (const Json* pj = optional_member(doc, "ports")) {
    const std::string pp = child(path, "ports");
    for (std::size_t i = 0; i < array(*pj, pp).size(); ++i) {
      const std::string ip = child(pp, i);
      const double dim = number(member((*pj)[i], "dim", ip), child(ip, "dim"));
      if (dim < 0 || dim != std::floor(dim)) throw SchemaError(child(ip, "dim"), "expected a non-negative integer");
      ports.push_back({string_value(member((*pj)[i], "name", ip), child(ip, "name")), static_cast<Eigen::Index>(dim)});
    }
  }
  auto check_ports = [&](Eigen::Index k) {
    if (ports.empty()) return;
    Eigen::Index total = 0;
    for (const auto& p : ports) total += p.dim;
    if (total != k) throw SchemaError(child(path, "ports"), "port dimensions sum to " + std::to_string(total) +
                                                                ", expected " + std::to_string(k));
  };
  try {
    if (const Json* sj = optional_member(doc, "skew")) {
      const Eigen::MatrixXd J = matrix_from_json(*sj, child(path, "skew"));
      if (J.rows() != J.cols()) throw SchemaError(child(path, "skew"), "expected a square matrix");
      check_ports(J.rows());
      return from_skew_map(J, ports);
    }
    if (const Json* kj = optional_member(doc, "kirchhoff")) {
      const Eigen::MatrixXd B = matrix_from_json(*kj, child(path, "kirchhoff"));
      check_ports(B.rows());
      return from_kirchhoff(B, ports);
    }
  } catch (const PreconditionError& e) {
    throw SchemaError(path, e.what());
  }
  const Eigen::MatrixXd F = matrix_from_json(member(doc, "F", path), child(path, "F"));
  const Eigen::MatrixXd E = matrix_from_json(member(doc, "E", path), child(path, "E"), F.rows(), F.cols());
  check_ports(F.cols());
  DiracStructure d;
  d.F = F;
  d.E = E;
  d.ports = ports.empty() ? std::vector<PortGroup>{{"port", F.cols()}} : ports;
  return d;
}

Json to_json(const DiracStructure& d) {
  Json ports = Json::array();
  for (const auto& p : d.ports) ports.push_back({{"name", p.name}, {"dim", p.dim}});
  return Json{{"ports", ports}, {"F", matrix_json(d.F)}, {"E", matrix_json(d.E)}};
}

Json check_json(const Check& c) {
  Json out{{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"tolerance", c.tolerance}};
  if (!c.detail.empty()) out["detail"] = c.detail;
  return out;
}

Json checks_json(const ValidationReport& r) {
  Json out = Json::array();
  for (const auto& c : r.checks) out.push_back(check_json(c));
  return out;
}

Json report(const std::string& command, std::uint64_t seed, Json checks, const Json& body) {
  Json out{{"tool", std::string(kToolName) + " " + command}, {"version", kVersion}, {"seed", seed},
           {"checks", std::move(checks)}};
  bool passed = true;
  for (const auto& c : out["checks"]) passed = passed && c.value("passed", true);
  out["passed"] = passed;
  for (const auto& [k, v] : body.items()) out[k] = v;
  return out;
}

}  // namespace phkit::io
