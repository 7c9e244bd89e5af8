#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "gmmssl/error.hpp"
#include "gmmssl/random.hpp"

namespace gmmssl::linalg {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline bool all_finite(const MatrixXd& m) { return m.allFinite(); }

inline double max_asymmetry(const MatrixXd& s) {
  return (s - s.transpose()).cwiseAbs().maxCoeff();
}

// Singular values in non-increasing order.
inline VectorXd singular_values(const MatrixXd& a) {
  if (a.size() == 0) return VectorXd();
  return Eigen::JacobiSVD<MatrixXd>(a).singularValues();
}

inline double spectral_norm(const MatrixXd& a) {
  VectorXd s = singular_values(a);
  return s.size() ? s(0) : 0.0;
}

// Orthonormal basis of col(a) keeping left singular vectors whose singular
// value exceeds rel_tol * sigma_max. Returns a d x 0 matrix for a zero input.
inline MatrixXd orthonormal_basis(const MatrixXd& a, double rel_tol) {
  if (a.cols() == 0) return MatrixXd(a.rows(), 0);
  Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeThinU);
  const VectorXd& s = svd.singularValues();
  if (s.size() == 0 || !(s(0) > 0.0)) return MatrixXd(a.rows(), 0);
  Index rank = 0;
  while (rank < s.size() && s(rank) > rel_tol * s(0)) ++rank;
  return svd.matrixU().leftCols(rank);
}

// Thin Q factor of a Householder QR, with column signs chosen so that the
// diagonal of R is non-negative.
inline MatrixXd qr_orthonormalize(const MatrixXd& a) {
  const Index k = std::min(a.rows(), a.cols());
  Eigen::HouseholderQR<MatrixXd> qr(a);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(a.rows(), k);
  const MatrixXd& r = qr.matrixQR();
  for (Index j = 0; j < k; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

inline MatrixXd random_orthonormal(Index d, Index m, Rng& rng) {
  return qr_orthonormalize(rng.normal_matrix(d, m));
}

// Symmetric square root S^{1/2} of an SPD matrix.
inline MatrixXd sqrt_spd(const MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(s);
  return es.operatorSqrt();
}

inline MatrixXd inv_sqrt_spd(const MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(s);
  return es.operatorInverseSqrt();
}

inline MatrixXd symmetrize(const MatrixXd& s) {
  return 0.5 * (s + s.transpose());
}

// SPD matrix with eigenvalues drawn log-uniformly from [lo, hi] in a random
// orthonormal eigenbasis.
inline MatrixXd random_spd(Index d, double lo, double hi, Rng& rng) {
  MatrixXd q = random_orthonormal(d, d, rng);
  VectorXd ev(d);
  for (Index i = 0; i < d; ++i)
    ev(i) = std::exp(std::log(lo) + rng.uniform() * (std::log(hi) - std::log(lo)));
  return symmetrize(q * ev.asDiagonal() * q.transpose());
}

}  // namespace gmmssl::linalg
