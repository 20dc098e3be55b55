#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phkit/model.hpp"

namespace phkit {

// Edge endpoint fixed to the inertial frame; it has no momentum state.
inline constexpr const char* kGroundNode = "ground";

struct MsdNode {
  std::string name;
  double mass = 1.0;
};

struct MsdEdge {
  std::string from;  // tail
  std::string to;    // head
  double coefficient = 1.0;
};

struct MsdGraph {
  std::vector<MsdNode> nodes;
  std::vector<MsdEdge> springs;
  std::vector<MsdEdge> dampers;
  std::vector<std::string> actuated;

  // PreconditionError describing the first invalid element.
  void validate() const;
  Eigen::Index node_index(const std::string& name) const;  // -1 for ground
};

// Column per edge: +1 at the tail node, -1 at the head node; ground rows
// are dropped.
struct Incidence {
  Eigen::MatrixXd springs;  // nodes x springs
  Eigen::MatrixXd dampers;  // nodes x dampers
};

Incidence incidence(const MsdGraph& graph);

// State (q_1..q_k spring elongations, p_<node> momenta),
// H = 1/2 sum k q^2 + 1/2 sum p^2 / m, output E^T dH/dp.
PhsModel build_msd(const MsdGraph& graph);

}  // namespace phkit
