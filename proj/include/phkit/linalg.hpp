#pragma once

#include <Eigen/Dense>

namespace phkit::linalg {

// Relative singular-value threshold used for every rank decision.
inline constexpr double kRankTolerance = 1e-10;

// Numerical rank: singular values above kRankTolerance * sigma_max.
Eigen::Index rank(const Eigen::MatrixXd& m);

// Orthonormal basis (columns) of the right null space of m.
Eigen::MatrixXd null_space(const Eigen::MatrixXd& m);

// Orthonormal basis (rows) of the row space of m.
Eigen::MatrixXd row_space(const Eigen::MatrixXd& m);

// Maximal-rank left annihilator: rows span {w : w^T g = 0}.
Eigen::MatrixXd left_annihilator(const Eigen::MatrixXd& g);

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m);

// Smallest eigenvalue of the symmetric part of m (+inf for empty m).
double min_symmetric_eigenvalue(const Eigen::MatrixXd& m);

double max_abs(const Eigen::MatrixXd& m);

// max |m + m^T|
double skew_violation(const Eigen::MatrixXd& m);
// max |m - m^T|
double symmetry_violation(const Eigen::MatrixXd& m);

Eigen::MatrixXd block_diagonal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

}  // namespace phkit::linalg
