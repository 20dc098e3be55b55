#include "phkit/dirac.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "phkit/error.hpp"
#include "phkit/linalg.hpp"

namespace phkit {
namespace {

std::vector<PortGroup> default_ports(std::vector<PortGroup> ports, Eigen::Index k) {
  if (ports.empty()) return {{"port", k}};
  Eigen::Index total = 0;
  std::set<std::string> names;
  for (const auto& p : ports) {
    if (p.dim < 0) throw DimensionError("negative port dimension");
    if (!names.insert(p.name).second) throw DimensionError("duplicate port name " + p.name);
    total += p.dim;
  }
  if (total != k) throw DimensionError("port dimensions do not sum to " + std::to_string(k));
  return ports;
}

}  // namespace

Eigen::Index DiracStructure::offset(const std::string& port) const {
  Eigen::Index off = 0;
  for (const auto& p : ports) {
    if (p.name == port) return off;
    off += p.dim;
  }
  throw DimensionError("no port named " + port);
}

const PortGroup& DiracStructure::group(const std::string& port) const {
  for (const auto& p : ports)
    if (p.name == port) return p;
  throw DimensionError("no port named " + port);
}

DiracStructure from_skew_map(const Eigen::MatrixXd& J, std::vector<PortGroup> ports) {
  if (J.rows() != J.cols()) throw DimensionError("skew map must be square");
  if (linalg::skew_violation(J) > 1e-12) throw PreconditionError("map is not skew-symmetric");
  const Eigen::Index k = J.rows();
  return {default_ports(std::move(ports), k), Eigen::MatrixXd::Identity(k, k), -J};
}

DiracStructure from_kirchhoff(const Eigen::MatrixXd& basis, std::vector<PortGroup> ports) {
  const Eigen::Index k = basis.rows(), d = basis.cols();
  if (linalg::rank(basis) != d) throw PreconditionError("Kirchhoff basis is rank deficient");
  // f in K  <=>  N^T f = 0 with N spanning K^perp;  e in K^perp  <=>  Q^T e = 0.
  const Eigen::MatrixXd N = linalg::null_space(basis.transpose());
  const Eigen::MatrixXd Qt = d == 0 ? Eigen::MatrixXd(0, k) : linalg::row_space(basis.transpose());
  DiracStructure out;
  out.ports = default_ports(std::move(ports), k);
  out.F = Eigen::MatrixXd::Zero(k, k);
  out.E = Eigen::MatrixXd::Zero(k, k);
  out.F.topRows(k - d) = N.transpose();
  out.E.bottomRows(d) = Qt;
  return out;
}

DiracReport verify_dirac(const Eigen::MatrixXd& F, const Eigen::MatrixXd& E) {
  if (F.rows() != F.cols() || E.rows() != E.cols() || F.rows() != E.rows())
    throw DimensionError("F and E must be square and of equal size");
  DiracReport r;
  r.k = F.cols();
  Eigen::MatrixXd FE(r.k, 2 * r.k);
  FE << F, E;
  r.rank = linalg::rank(FE);
  r.rank_ok = r.rank == r.k;
  r.structure_residual = linalg::max_abs(F * E.transpose() + E * F.transpose());
  const Eigen::MatrixXd basis = linalg::null_space(FE);
  const Eigen::MatrixXd pairing =
      basis.bottomRows(r.k).transpose() * basis.topRows(r.k);  // e_i^T f_j
  r.power_residual = linalg::max_abs(0.5 * (pairing + pairing.transpose()));
  r.passed = r.rank_ok && r.structure_residual <= kDiracTolerance &&
             r.power_residual <= kDiracTolerance;
  return r;
}

Eigen::MatrixXd kernel_basis(const DiracStructure& d) {
  Eigen::MatrixXd FE(d.F.rows(), d.F.cols() + d.E.cols());
  FE << d.F, d.E;
  return linalg::null_space(FE);
}

DiracStructure compose(const DiracStructure& a, const DiracStructure& b,
                       const PortPairing& shared) {
  std::set<std::string> paired_a, paired_b;
  Eigen::Index ks = 0;
  for (const auto& [pa, pb] : shared) {
    if (a.group(pa).dim != b.group(pb).dim)
      throw DimensionError("paired ports " + pa + " and " + pb + " differ in dimension");
    if (!paired_a.insert(pa).second || !paired_b.insert(pb).second)
      throw DimensionError("port paired twice");
    ks += a.group(pa).dim;
  }

  // Column layout: [external flows | external efforts | shared flows | shared efforts].
  struct Placement {
    const DiracStructure* d;
    const PortGroup* group;
    Eigen::Index src;   // offset inside d
    Eigen::Index dst;   // external offset, or shared offset
    bool external;
    double flow_sign;
  };
  std::vector<Placement> placements;
  std::vector<PortGroup> ext_ports;
  Eigen::Index k_ext = 0;

  std::set<std::string> names_a, names_b;
  for (const auto& p : a.ports)
    if (!paired_a.count(p.name)) names_a.insert(p.name);
  for (const auto& p : b.ports)
    if (!paired_b.count(p.name)) names_b.insert(p.name);

  auto add_external = [&](const DiracStructure& d, const std::set<std::string>& paired,
                          const std::set<std::string>& other, const char* prefix) {
    for (const auto& p : d.ports) {
      if (paired.count(p.name)) continue;
      placements.push_back({&d, &p, d.offset(p.name), k_ext, true, 1.0});
      ext_ports.push_back({other.count(p.name) ? prefix + p.name : p.name, p.dim});
      k_ext += p.dim;
    }
  };
  add_external(a, paired_a, names_b, "a.");
  add_external(b, paired_b, names_a, "b.");

  Eigen::Index s_off = 0;
  for (const auto& [pa, pb] : shared) {
    placements.push_back({&a, &a.group(pa), a.offset(pa), s_off, false, 1.0});
    placements.push_back({&b, &b.group(pb), b.offset(pb), s_off, false, -1.0});
    s_off += a.group(pa).dim;
  }

  const Eigen::Index ka = a.dimension(), kb = b.dimension();
  Eigen::MatrixXd Mx = Eigen::MatrixXd::Zero(ka + kb, 2 * k_ext);
  Eigen::MatrixXd Ms = Eigen::MatrixXd::Zero(ka + kb, 2 * ks);
  for (const auto& pl : placements) {
    const Eigen::Index row0 = pl.d == &a ? 0 : ka;
    const Eigen::Index rows = pl.d == &a ? ka : kb;
    const Eigen::Index dim = pl.group->dim;
    const auto Fblk = pl.d->F.block(0, pl.src, rows, dim);
    const auto Eblk = pl.d->E.block(0, pl.src, rows, dim);
    if (pl.external) {
      Mx.block(row0, pl.dst, rows, dim) += Fblk;
      Mx.block(row0, k_ext + pl.dst, rows, dim) += Eblk;
    } else {
      Ms.block(row0, pl.dst, rows, dim) += pl.flow_sign * Fblk;
      Ms.block(row0, ks + pl.dst, rows, dim) += Eblk;
    }
  }

  // (x, s) solvable in s  <=>  L Mx x = 0 with L a left annihilator of Ms.
  const Eigen::MatrixXd L =
      ks == 0 ? Eigen::MatrixXd::Identity(ka + kb, ka + kb) : linalg::left_annihilator(Ms);
  const Eigen::MatrixXd reduced = L * Mx;
  const Eigen::MatrixXd rows = 2 * k_ext == 0 ? Eigen::MatrixXd(0, 0) : linalg::row_space(reduced);
  if (rows.rows() != k_ext)
    throw PreconditionError("degenerate composition: eliminated constraints have rank " +
                            std::to_string(rows.rows()) + ", expected " + std::to_string(k_ext));
  DiracStructure out;
  out.ports = std::move(ext_ports);
  out.F = rows.leftCols(k_ext);
  out.E = rows.rightCols(k_ext);
  return out;
}

bool same_subspace(const DiracStructure& a, const DiracStructure& b) {
  if (a.dimension() != b.dimension()) return false;
  const Eigen::Index k = a.dimension();
  Eigen::MatrixXd A(a.F.rows(), 2 * k), B(b.F.rows(), 2 * k), AB(a.F.rows() + b.F.rows(), 2 * k);
  A << a.F, a.E;
  B << b.F, b.E;
  AB << A, B;
  const auto ra = linalg::rank(A);
  return ra == linalg::rank(B) && ra == linalg::rank(AB);
}

}  // namespace phkit
