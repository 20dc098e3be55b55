#include "phkit/netbuild.hpp"

#include <cctype>
#include <cmath>
#include <set>

#include "phkit/error.hpp"
#include "phkit/linalg.hpp"

namespace phkit {

namespace {

bool valid_node_name(const std::string& name) {
  if (name.empty()) return false;
  for (char c : name) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  }
  return true;
}

void check_edges(const MsdGraph& g, const std::vector<MsdEdge>& edges, const char* kind, const char* coeff) {
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const MsdEdge& e = edges[i];
    const std::string where = std::string(kind) + " " + std::to_string(i);
    if (!(e.coefficient > 0.0) || !std::isfinite(e.coefficient))
      throw PreconditionError(where + ": " + coeff + " must be positive");
    for (const auto* end : {&e.from, &e.to}) {
      if (*end != kGroundNode && g.node_index(*end) < 0)
        throw PreconditionError(where + ": unknown node \"" + *end + "\"");
    }
    if (e.from == e.to) throw PreconditionError(where + ": both ends on \"" + e.from + "\"");
  }
}

}  // namespace

Eigen::Index MsdGraph::node_index(const std::string& name) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].name == name) return static_cast<Eigen::Index>(i);
  }
  return -1;
}

void MsdGraph::validate() const {
  std::set<std::string> seen;
  for (const auto& n : nodes) {
    if (!valid_node_name(n.name)) throw PreconditionError("invalid node name \"" + n.name + "\"");
    if (n.name == kGroundNode) throw PreconditionError("node name \"ground\" is reserved");
    if (!seen.insert(n.name).second) throw PreconditionError("duplicate node \"" + n.name + "\"");
    if (!(n.mass > 0.0) || !std::isfinite(n.mass))
      throw PreconditionError("node \"" + n.name + "\": mass must be positive");
  }
  check_edges(*this, springs, "spring", "stiffness");
  check_edges(*this, dampers, "damper", "damping coefficient");
  std::set<std::string> act;
  for (const auto& a : actuated) {
    if (node_index(a) < 0) throw PreconditionError("actuated node \"" + a + "\" is not a mass");
    if (!act.insert(a).second) throw PreconditionError("node \"" + a + "\" actuated twice");
  }
}

Incidence incidence(const MsdGraph& graph) {
  graph.validate();
  const auto n = static_cast<Eigen::Index>(graph.nodes.size());
  auto build = [&](const std::vector<MsdEdge>& edges) {
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(edges.size()));
    for (std::size_t j = 0; j < edges.size(); ++j) {
      const Eigen::Index tail = graph.node_index(edges[j].from);
      const Eigen::Index head = graph.node_index(edges[j].to);
      if (tail >= 0) D(tail, static_cast<Eigen::Index>(j)) = 1.0;
      if (head >= 0) D(head, static_cast<Eigen::Index>(j)) = -1.0;
    }
    return D;
  };
  return {build(graph.springs), build(graph.dampers)};
}

PhsModel build_msd(const MsdGraph& graph) {
  const Incidence inc = incidence(graph);
  const Eigen::Index nn = inc.springs.rows();
  const Eigen::Index ns = inc.springs.cols();
  const Eigen::Index n = ns + nn;

  std::vector<std::string> state;
  for (Eigen::Index j = 0; j < ns; ++j) state.push_back("q" + std::to_string(j + 1));
  for (const auto& node : graph.nodes) state.push_back("p_" + node.name);

  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  J.topRightCorner(ns, nn) = inc.springs.transpose();
  J.bottomLeftCorner(nn, ns) = -inc.springs;

  Eigen::VectorXd d(inc.dampers.cols());
  for (std::size_t j = 0; j < graph.dampers.size(); ++j) d(static_cast<Eigen::Index>(j)) = graph.dampers[j].coefficient;
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n, n);
  R.bottomRightCorner(nn, nn) = inc.dampers * d.asDiagonal() * inc.dampers.transpose();

  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(graph.actuated.size()));
  for (std::size_t a = 0; a < graph.actuated.size(); ++a)
    G(ns + graph.node_index(graph.actuated[a]), static_cast<Eigen::Index>(a)) = 1.0;

  Eigen::VectorXd q(n);
  for (std::size_t j = 0; j < graph.springs.size(); ++j) q(static_cast<Eigen::Index>(j)) = graph.springs[j].coefficient;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) q(ns + static_cast<Eigen::Index>(i)) = 1.0 / graph.nodes[i].mass;

  PhsModel model = make_phs(state, MatrixField::constant(J, state), MatrixField::constant(R, state),
                            MatrixField::constant(G, state), Hamiltonian::quadratic(q.asDiagonal().toDenseMatrix()));
  model.metadata["kind"] = "msd-graph";
  model.metadata["incidence"] = "+1 at tail, -1 at head";
  model.metadata["output"] = "velocities of actuated masses, E^T dH/dp";
  return model;
}

}  // namespace phkit
