#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gmmssl/error.hpp"
#include "gmmssl/linalg.hpp"
#include "gmmssl/mixture.hpp"

namespace gmmssl {

/// A d x r linear map x -> A^T x. Only the column space matters for the
/// Fisher discriminant; the scaling matters for clustering.
class ProjectionMap {
 public:
  explicit ProjectionMap(MatrixXd matrix) : matrix_(std::move(matrix)) {
    if (matrix_.cols() < 1) throw InvalidArgument("projection needs at least one column");
    if (!matrix_.allFinite()) throw InvalidArgument("projection has non-finite entries");
  }

  const MatrixXd& matrix() const { return matrix_; }
  Index ambient_dim() const { return matrix_.rows(); }
  Index rank_bound() const { return matrix_.cols(); }

  /// Rows of `points` mapped through A^T (n x r).
  MatrixXd apply(const MatrixXd& points) const { return points * matrix_; }

 private:
  MatrixXd matrix_;
};

/// Subspace held as a d x m matrix with orthonormal columns.
class Subspace {
 public:
  explicit Subspace(MatrixXd basis) : basis_(std::move(basis)) {
    if (basis_.cols() < 1 || basis_.cols() > basis_.rows())
      throw InvalidArgument("subspace dimension must lie in [1, d]");
    const MatrixXd gram = basis_.transpose() * basis_;
    if ((gram - MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() > 1e-10)
      throw InvalidArgument("subspace basis is not orthonormal");
  }

  /// Orthonormal basis of col(a), truncating singular values below
  /// rel_tol * sigma_max.
  static Subspace span_of(const MatrixXd& a, double rel_tol = 1e-10) {
    MatrixXd q = linalg::orthonormal_basis(a, rel_tol);
    if (q.cols() == 0) throw DegenerateError("cannot span a zero-dimensional subspace");
    return Subspace(std::move(q));
  }

  const MatrixXd& basis() const { return basis_; }
  Index dim() const { return basis_.cols(); }
  Index ambient_dim() const { return basis_.rows(); }

  MatrixXd projector() const { return basis_ * basis_.transpose(); }

 private:
  MatrixXd basis_;
};

namespace detail {

constexpr double kDefaultSpanTol = 1e-9;

inline void check_model_projection(const SharedGMM& model, const MatrixXd& a) {
  if (a.rows() != model.dim()) throw InvalidArgument("projection does not match model dimension");
}

}  // namespace detail

/// S_F = span{Sigma^{-1} mu_k}: solve Sigma Y = [mu_1 ... mu_K] with the
/// cached Cholesky factor, then keep the numerically non-zero left singular
/// directions of Y.
inline Subspace fisher_subspace(const SharedGMM& model, double rank_tol = detail::kDefaultSpanTol) {
  const MatrixXd y = model.cholesky().solve(model.means());
  const MatrixXd q = linalg::orthonormal_basis(y, rank_tol);
  if (q.cols() == 0) throw DegenerateError("Fisher subspace undefined (zero-dimensional)");
  return Subspace(q);
}

inline Subspace mean_subspace(const SharedGMM& model, double rank_tol = detail::kDefaultSpanTol) {
  const MatrixXd q = linalg::orthonormal_basis(model.means(), rank_tol);
  if (q.cols() == 0) throw DegenerateError("mean subspace undefined (all means are zero)");
  return Subspace(q);
}

struct SpectralSubspace {
  Subspace subspace;
  VectorXd eigenvalues;  // all eigenvalues of the second moment, non-increasing
  bool non_unique = false;
};

namespace detail {

inline SpectralSubspace top_eigenspace(const MatrixXd& second_moment, Index r) {
  const Index d = second_moment.rows();
  if (r < 1 || r > d) throw InvalidArgument("subspace dimension r must lie in [1, d]");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(linalg::symmetrize(second_moment));
  // Eigen returns ascending order.
  VectorXd ev = es.eigenvalues().reverse();
  MatrixXd vecs = es.eigenvectors().rowwise().reverse();
  bool tie = r < d && std::abs(ev(r - 1) - ev(r)) <= 1e-10;
  return SpectralSubspace{Subspace(vecs.leftCols(r)), std::move(ev), tie};
}

}  // namespace detail

/// Top-r eigenvectors of the population second moment M + Sigma.
inline SpectralSubspace svd_subspace(const SharedGMM& model, Index r) {
  return detail::top_eigenspace(model.second_moment(), r);
}

/// Top-r eigenvectors of the empirical second moment (1/n) X^T X, rows of X
/// being samples.
inline SpectralSubspace svd_subspace_empirical(const MatrixXd& samples, Index r) {
  if (samples.rows() < 1) throw InvalidArgument("empirical second moment needs samples");
  const MatrixXd m = samples.transpose() * samples / static_cast<double>(samples.rows());
  return detail::top_eigenspace(m, r);
}

/// J(A) = Tr((A^T Sigma A)^{-1} A^T M A).
inline double fisher_discriminant(const SharedGMM& model, const MatrixXd& a) {
  detail::check_model_projection(model, a);
  const MatrixXd within = linalg::symmetrize(a.transpose() * model.covariance() * a);
  const MatrixXd between = a.transpose() * model.between_scatter() * a;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(within);
  if (within.rows() == 0 || !(es.eigenvalues()(0) > 1e-12))
    throw DegenerateError("degenerate projection: A^T Sigma A is singular");
  return Eigen::LLT<MatrixXd>(within).solve(between).trace();
}

/// Principal angles in radians, non-decreasing, min(m1, m2) of them.
///
/// Cosines come from the singular values of Q1^T Q2. For angles below pi/4
/// the sines of (I - Q1 Q1^T) Q2 are used instead (Q1 being the larger
/// subspace), which keeps tiny angles accurate where arccos is flat.
inline std::vector<double> principal_angles(const Subspace& s1, const Subspace& s2) {
  if (s1.ambient_dim() != s2.ambient_dim())
    throw InvalidArgument("subspaces live in different ambient dimensions");
  const Subspace& big = s1.dim() >= s2.dim() ? s1 : s2;
  const Subspace& small = s1.dim() >= s2.dim() ? s2 : s1;
  const MatrixXd cross = big.basis().transpose() * small.basis();
  const VectorXd cosines = linalg::singular_values(cross);  // descending
  const MatrixXd residual = small.basis() - big.basis() * cross;
  const VectorXd sines = linalg::singular_values(residual);  // descending

  const Index m = small.dim();
  std::vector<double> angles(static_cast<size_t>(m));
  for (Index i = 0; i < m; ++i) {
    const double c = std::clamp(cosines(i), 0.0, 1.0);
    double theta = std::acos(c);
    if (theta < std::numbers::pi / 4.0) {
      const double s = std::clamp(sines(m - 1 - i), 0.0, 1.0);
      theta = std::asin(s);
    }
    angles[static_cast<size_t>(i)] = theta;
  }
  std::sort(angles.begin(), angles.end());
  return angles;
}

enum class Orthonormalization { kSvdTruncated, kQr };

struct SubspaceReport {
  std::vector<double> principal_angles;
  bool contained = false;
  bool equal = false;
  bool collapse = false;
  double rank_tolerance = 0.0;
  Index learned_rank = 0;
  Index reference_dim = 0;

  /// Largest angle between a learned direction and the reference: the
  /// largest principal angle when learned_rank <= reference_dim, pi/2
  /// otherwise (some learned direction is then orthogonal to the reference).
  double containment_angle() const {
    if (learned_rank > reference_dim) return std::numbers::pi / 2.0;
    return principal_angles.empty() ? 0.0 : principal_angles.back();
  }
};

constexpr double kDefaultRankTol = 1e-6;
// Rank cut for maps produced by stochastic training. Directions outside the
// Fisher subspace are damped only at third order, so a trained map keeps
// residual singular values of a few percent of sigma_max there.
constexpr double kTrainedRankTol = 0.1;
constexpr double kTrainedAngleTol = 3.0 * std::numbers::pi / 180.0;
constexpr double kAnalyticAngleTol = 1e-6;

/// Is col(learned) contained in (equal to) the reference subspace?
///
/// The learned map is orthonormalized by a truncated SVD (rank = number of
/// singular values above rank_tol * sigma_max); kQr keeps every column.
inline SubspaceReport containment_report(const MatrixXd& learned, const Subspace& reference,
                                         double rank_tol = kDefaultRankTol,
                                         double angle_tol = kTrainedAngleTol,
                                         Orthonormalization method = Orthonormalization::kSvdTruncated) {
  if (learned.rows() != reference.ambient_dim())
    throw InvalidArgument("learned map does not match reference ambient dimension");
  if (!learned.allFinite()) throw InvalidArgument("learned map has non-finite entries");
  SubspaceReport report;
  report.rank_tolerance = rank_tol;
  report.reference_dim = reference.dim();

  const double sigma_max = linalg::spectral_norm(learned);
  if (!(sigma_max > 1e-12)) {
    report.collapse = true;
    report.contained = true;
    return report;
  }
  MatrixXd q = method == Orthonormalization::kQr ? linalg::qr_orthonormalize(learned)
                                                 : linalg::orthonormal_basis(learned, rank_tol);
  report.learned_rank = q.cols();
  const Subspace span(std::move(q));
  report.principal_angles = principal_angles(span, reference);
  report.contained = report.learned_rank <= reference.dim() &&
                     report.principal_angles.back() <= angle_tol;
  report.equal = report.contained && report.learned_rank == reference.dim();
  return report;
}

/// Sigma^{-1}(mu1 - mu2), unnormalized.
inline VectorXd lda_direction(const VectorXd& mu1, const VectorXd& mu2, const MatrixXd& sigma) {
  if (mu1.size() != mu2.size() || sigma.rows() != mu1.size() || sigma.cols() != mu1.size())
    throw InvalidArgument("lda_direction: dimension mismatch");
  const VectorXd diff = mu1 - mu2;
  if (diff.cwiseAbs().maxCoeff() == 0.0) throw DegenerateError("zero discriminant direction");
  Eigen::LLT<MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw InvalidArgument("covariance is not positive definite");
  return llt.solve(diff);
}

/// Maximizer of |t^T (mu1 - mu2)|^2 / t^T (w1 S1 + w2 S2) t. With
/// `weighted == false` the unweighted closed form (S1 + S2)^{-1}(mu1 - mu2)
/// is returned instead.
inline VectorXd fisher_lda_direction(const VectorXd& mu1, const VectorXd& mu2, const MatrixXd& sigma1,
                                     const MatrixXd& sigma2, double w1, double w2,
                                     bool weighted = true) {
  if (!(w1 > 0.0 && w2 > 0.0) || std::abs(w1 + w2 - 1.0) > 1e-12)
    throw InvalidArgument("fisher_lda_direction: weights must be positive and sum to 1");
  if (sigma1.rows() != sigma2.rows() || sigma1.cols() != sigma2.cols())
    throw InvalidArgument("fisher_lda_direction: covariance shapes differ");
  for (const MatrixXd* s : {&sigma1, &sigma2}) {
    Eigen::LLT<MatrixXd> llt(*s);
    if (llt.info() != Eigen::Success) throw InvalidArgument("covariance is not positive definite");
  }
  const MatrixXd pooled = weighted ? MatrixXd(w1 * sigma1 + w2 * sigma2) : MatrixXd(sigma1 + sigma2);
  return lda_direction(mu1, mu2, pooled);
}

/// Fisher directions ordered by the generalized Rayleigh quotient
/// v^T M v / v^T Sigma v (largest first); only directions with a positive
/// quotient, i.e. those spanning S_F, are returned. Columns are
/// orthonormalized in that order.
struct FisherDirections {
  MatrixXd basis;
  VectorXd ratios;
};

inline FisherDirections fisher_directions(const SharedGMM& model, double rank_tol = detail::kDefaultSpanTol) {
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> ges(model.between_scatter(), model.covariance());
  const VectorXd ev = ges.eigenvalues().reverse();
  const MatrixXd vecs = ges.eigenvectors().rowwise().reverse();
  const double top = ev.size() ? std::max(ev(0), 0.0) : 0.0;
  if (!(top > 0.0)) throw DegenerateError("Fisher subspace undefined (zero-dimensional)");
  Index m = 0;
  while (m < ev.size() && ev(m) > rank_tol * top) ++m;
  return FisherDirections{linalg::qr_orthonormalize(vecs.leftCols(m)), ev.head(m)};
}

}  // namespace gmmssl
