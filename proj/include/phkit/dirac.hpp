#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace phkit {

inline constexpr double kDiracTolerance = 1e-10;

struct PortGroup {
  std::string name;
  Eigen::Index dim = 0;
};

// Constant Dirac structure in kernel representation
//   D = {(f, e) : F f + E e = 0},  F, E k x k.
// Port groups partition the k flow (and effort) coordinates in order.
struct DiracStructure {
  std::vector<PortGroup> ports;
  Eigen::MatrixXd F;
  Eigen::MatrixXd E;

  Eigen::Index dimension() const { return F.cols(); }
  // First coordinate of the named group; DimensionError if absent.
  Eigen::Index offset(const std::string& port) const;
  const PortGroup& group(const std::string& port) const;
};

struct DiracReport {
  Eigen::Index k = 0;
  Eigen::Index rank = 0;
  bool rank_ok = false;
  double structure_residual = 0.0;  // max |F E^T + E F^T|
  double power_residual = 0.0;      // max |e^T f| form over an orthonormal kernel basis
  bool passed = false;
};

// Graph of a skew map, f = J e. Empty `ports` means one group "port".
DiracStructure from_skew_map(const Eigen::MatrixXd& J, std::vector<PortGroup> ports = {});

// K x K^perp for the subspace K spanned by the columns of `basis`.
DiracStructure from_kirchhoff(const Eigen::MatrixXd& basis, std::vector<PortGroup> ports = {});

DiracReport verify_dirac(const Eigen::MatrixXd& F, const Eigen::MatrixXd& E);
inline DiracReport verify_dirac(const DiracStructure& d) { return verify_dirac(d.F, d.E); }

// Columns (f; e) spanning the subspace.
Eigen::MatrixXd kernel_basis(const DiracStructure& d);

// Pairs (port of a, port of b) joined with f_a = -f_b and e_a = e_b.
using PortPairing = std::vector<std::pair<std::string, std::string>>;

// Eliminates the shared port variables. Unpaired ports of a come first, then
// those of b; clashing names get "a." / "b." prefixes. Degenerate
// eliminations raise PreconditionError.
DiracStructure compose(const DiracStructure& a, const DiracStructure& b,
                       const PortPairing& shared);

// Same subspace of flow x effort space (port names ignored).
bool same_subspace(const DiracStructure& a, const DiracStructure& b);

}  // namespace phkit
