#include "phkit/linalg.hpp"

#include <limits>

namespace phkit::linalg {
namespace {

struct Svd {
  Eigen::MatrixXd u;
  Eigen::VectorXd s;
  Eigen::MatrixXd v;
  Eigen::Index rank;
};

Svd full_svd(const Eigen::MatrixXd& m) {
  Svd out;
  if (m.rows() == 0 || m.cols() == 0) {
    out.u = Eigen::MatrixXd::Identity(m.rows(), m.rows());
    out.v = Eigen::MatrixXd::Identity(m.cols(), m.cols());
    out.s = Eigen::VectorXd();
    out.rank = 0;
    return out;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  out.u = svd.matrixU();
  out.v = svd.matrixV();
  out.s = svd.singularValues();
  const double smax = out.s.size() > 0 ? out.s(0) : 0.0;
  out.rank = 0;
  if (smax > 0.0) {
    for (Eigen::Index i = 0; i < out.s.size(); ++i)
      if (out.s(i) > kRankTolerance * smax) ++out.rank;
  }
  return out;
}

}  // namespace

Eigen::Index rank(const Eigen::MatrixXd& m) { return full_svd(m).rank; }

Eigen::MatrixXd null_space(const Eigen::MatrixXd& m) {
  const Svd svd = full_svd(m);
  return svd.v.rightCols(m.cols() - svd.rank);
}

Eigen::MatrixXd row_space(const Eigen::MatrixXd& m) {
  const Svd svd = full_svd(m);
  return svd.v.leftCols(svd.rank).transpose();
}

Eigen::MatrixXd left_annihilator(const Eigen::MatrixXd& g) {
  return null_space(g.transpose()).transpose();
}

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m) {
  const Svd svd = full_svd(m);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m.cols(), m.rows());
  for (Eigen::Index i = 0; i < svd.rank; ++i)
    out += svd.v.col(i) * (1.0 / svd.s(i)) * svd.u.col(i).transpose();
  return out;
}

double min_symmetric_eigenvalue(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

double max_abs(const Eigen::MatrixXd& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

double skew_violation(const Eigen::MatrixXd& m) { return max_abs(m + m.transpose()); }

double symmetry_violation(const Eigen::MatrixXd& m) { return max_abs(m - m.transpose()); }

Eigen::MatrixXd block_diagonal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

}  // namespace phkit::linalg
