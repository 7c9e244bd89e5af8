#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gmmssl/error.hpp"
#include "gmmssl/linalg.hpp"
#include "gmmssl/mixture.hpp"
#include "gmmssl/objectives.hpp"
#include "gmmssl/random.hpp"

namespace gmmssl {

namespace detail {

// K - 1 standard-normal means in R^d, the K-th chosen so that all sum to 0.
inline MatrixXd centered_random_means(Index k, Index d, Rng& rng) {
  MatrixXd means(d, k);
  means.leftCols(k - 1) = rng.normal_matrix(d, k - 1);
  means.col(k - 1) = -means.leftCols(k - 1).rowwise().sum();
  return means;
}

inline VectorXd uniform_weights(Index k) {
  return VectorXd::Constant(k, 1.0 / static_cast<double>(k));
}

}  // namespace detail

/// Synthetic benchmark mixture: K equally likely components whose means sum
/// to zero, identity covariance with the variance multiplied by kappa on the
/// (d - K + 1)-dimensional complement of the mean span.
inline SharedGMM make_benchmark_model(Index k, Index d, double kappa, Rng& rng) {
  if (k < 2) throw InvalidArgument("benchmark mixture needs K >= 2");
  if (d < k - 1) throw InvalidArgument("benchmark mixture needs d >= K - 1");
  if (!(kappa >= 1.0)) throw InvalidArgument("kappa must be >= 1");
  MatrixXd means = detail::centered_random_means(k, d, rng);
  const MatrixXd q = linalg::qr_orthonormalize(means.leftCols(k - 1));
  const MatrixXd perp = MatrixXd::Identity(d, d) - q * q.transpose();
  MatrixXd cov = linalg::symmetrize(MatrixXd::Identity(d, d) + (kappa - 1.0) * perp);
  return SharedGMM(detail::uniform_weights(k), std::move(means), std::move(cov));
}

/// Mixture living entirely in its mean span (d = K - 1) with the variance
/// multiplied by kappa along floor(K/2) random orthonormal directions.
inline SharedGMM make_scaling_model(Index k, double kappa, Rng& rng) {
  if (k < 3) throw InvalidArgument("scaling mixture needs K >= 3");
  if (!(kappa >= 1.0)) throw InvalidArgument("kappa must be >= 1");
  const Index d = k - 1;
  MatrixXd means = detail::centered_random_means(k, d, rng);
  const MatrixXd q = linalg::random_orthonormal(d, k / 2, rng);
  MatrixXd cov = linalg::symmetrize(MatrixXd::Identity(d, d) + (kappa - 1.0) * q * q.transpose());
  return SharedGMM(detail::uniform_weights(k), std::move(means), std::move(cov));
}

/// Two thin parallel pancakes: means +-separation/2 along e_1, standard
/// deviation `thin_sd` across the pancakes and large spreads along the
/// remaining axes (decreasing from wide_sd so the spectrum has no ties).
inline SharedGMM make_pancake_model(Index d = 3, double separation = 4.0, double thin_sd = 0.5,
                                    double wide_sd = 4.0) {
  if (d < 2) throw InvalidArgument("pancake model needs d >= 2");
  MatrixXd means = MatrixXd::Zero(d, 2);
  means(0, 0) = 0.5 * separation;
  means(0, 1) = -0.5 * separation;
  VectorXd var(d);
  var(0) = thin_sd * thin_sd;
  for (Index i = 1; i < d; ++i) {
    const double sd = wide_sd * (1.0 - 0.25 * static_cast<double>(i - 1) / static_cast<double>(d));
    var(i) = sd * sd;
  }
  return SharedGMM(detail::uniform_weights(2), std::move(means), var.asDiagonal());
}

/// Two isotropic components with means on the first two axes, equidistant
/// from the origin; the Fisher subspace is the x-y plane.
inline SharedGMM make_collapse_model(Index d = 4, double radius = 3.0) {
  if (d < 2) throw InvalidArgument("collapse model needs d >= 2");
  MatrixXd means = MatrixXd::Zero(d, 2);
  means(0, 0) = radius;
  means(1, 1) = radius;
  return SharedGMM(detail::uniform_weights(2), std::move(means), MatrixXd::Identity(d, d));
}

/// Two-modality mixture with random SPD covariances (eigenvalues in
/// [1, kappa]). With `aligned` the whitened means coincide across modalities
/// on the first min(d1, d2) coordinates (and vanish elsewhere); otherwise each
/// modality gets independent centred means.
inline ClipGMM make_clip_model(Index k, Index d1, Index d2, bool aligned, Rng& rng, double kappa = 4.0) {
  if (k < 1) throw InvalidArgument("clip mixture needs K >= 1");
  if (d1 < k - 1 || d2 < k - 1) throw InvalidArgument("clip mixture needs d1, d2 >= K - 1");
  MatrixXd cov_v = linalg::random_spd(d1, 1.0, kappa, rng);
  MatrixXd cov_t = linalg::random_spd(d2, 1.0, kappa, rng);
  // A single component has no centring constraint.
  auto draw_means = [&](Index dim) {
    return k == 1 ? rng.normal_matrix(dim, 1) : detail::centered_random_means(k, dim, rng);
  };
  MatrixXd means_v, means_t;
  if (aligned) {
    const Index shared = std::min(d1, d2);
    const MatrixXd white = draw_means(shared);
    MatrixXd pv = MatrixXd::Zero(d1, k), pt = MatrixXd::Zero(d2, k);
    pv.topRows(shared) = white;
    pt.topRows(shared) = white;
    means_v = linalg::sqrt_spd(cov_v) * pv;
    means_t = linalg::sqrt_spd(cov_t) * pt;
  } else {
    means_v = draw_means(d1);
    means_t = draw_means(d2);
  }
  return ClipGMM(detail::uniform_weights(k), std::move(means_v), std::move(cov_v), std::move(means_t),
                 std::move(cov_t));
}

/// Smallest non-zero eigenvalue of Sigma^{-1/2} M Sigma^{-1/2}.
inline double whitened_lambda_min(const SharedGMM& model, double rel_tol = 1e-9) {
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> ges(model.between_scatter(), model.covariance(),
                                                         Eigen::EigenvaluesOnly);
  const VectorXd& ev = ges.eigenvalues();
  const double top = ev.maxCoeff();
  if (!(top > 0.0)) throw DegenerateError("mixture has no between-component scatter");
  double lo = top;
  for (Index i = 0; i < ev.size(); ++i)
    if (ev(i) > rel_tol * top) lo = std::min(lo, ev(i));
  return lo;
}

/// delta * lambda_min / (1 + lambda_min): SimSiam regularization weights
/// strictly below this recover the whole Fisher subspace.
inline double simsiam_xi_bound(const SharedGMM& model, double delta) {
  const double lam = whitened_lambda_min(model);
  return delta * lam / (1.0 + lam);
}

/// Source of training batches. With a pool, batches are drawn with
/// replacement from a fixed set of augmentation pairs plus an independent
/// set of negatives. Online sources draw every batch fresh from the model.
/// Either way a batch is a deterministic function of (seed, step).
class PairSource {
 public:
  PairSource(const AeDConfig& cfg, Index pool_size, Rng rng)
      : pairs_(sample_aed(cfg, pool_size, rng)), negatives_(sample_gmm(cfg.base, pool_size, rng).points) {}

  PairSource(AeDPairs pairs, MatrixXd negatives) : pairs_(std::move(pairs)), negatives_(std::move(negatives)) {
    if (pairs_.size() < 1 || negatives_.rows() < 1) throw InvalidArgument("pair source needs non-empty pools");
  }

  static PairSource online(const AeDConfig& cfg) { return PairSource(cfg); }

  bool is_online() const { return online_.has_value(); }
  const AeDPairs& pairs() const { return pairs_; }
  const MatrixXd& negatives() const { return negatives_; }

  Batch batch(std::uint64_t seed, std::int64_t step, Index n, Index m) const {
    Rng rng = Rng(seed).substream(static_cast<std::uint64_t>(step));
    if (online_) {
      AeDPairs p = sample_aed(*online_, n, rng);
      return Batch{std::move(p.anchors), std::move(p.augments), sample_gmm(online_->base, m, rng).points};
    }
    const Index d = pairs_.anchors.cols();
    Batch b{MatrixXd(n, d), MatrixXd(n, d), MatrixXd(m, d)};
    for (Index i = 0; i < n; ++i) {
      const Index p = rng.index(pairs_.size());
      b.anchors.row(i) = pairs_.anchors.row(p);
      b.augments.row(i) = pairs_.augments.row(p);
    }
    for (Index j = 0; j < m; ++j) b.negatives.row(j) = negatives_.row(rng.index(negatives_.rows()));
    return b;
  }

 private:
  explicit PairSource(const AeDConfig& cfg) : online_(cfg) {}

  std::optional<AeDConfig> online_;
  AeDPairs pairs_;
  MatrixXd negatives_;
};

/// CLIP counterpart of PairSource; negatives are unpaired draws.
class ClipSource {
 public:
  ClipSource(const ClipGMM& model, Index pool_size, Rng rng)
      : pairs_(sample_clip(model, pool_size, rng)), negatives_(sample_clip(model, pool_size, rng)) {}

  static ClipSource online(const ClipGMM& model) { return ClipSource(model); }

  bool is_online() const { return online_.has_value(); }
  const ClipPairs& pairs() const { return pairs_; }

  ClipBatch batch(std::uint64_t seed, std::int64_t step, Index n, Index m) const {
    Rng rng = Rng(seed).substream(static_cast<std::uint64_t>(step));
    if (online_) {
      ClipPairs p = sample_clip(*online_, n, rng);
      ClipPairs neg = sample_clip(*online_, m, rng);
      return ClipBatch{std::move(p.vision), std::move(p.text), std::move(neg.vision), std::move(neg.text)};
    }
    ClipBatch b{MatrixXd(n, pairs_.vision.cols()), MatrixXd(n, pairs_.text.cols()),
                MatrixXd(m, pairs_.vision.cols()), MatrixXd(m, pairs_.text.cols())};
    for (Index i = 0; i < n; ++i) {
      const Index p = rng.index(pairs_.size());
      b.vision.row(i) = pairs_.vision.row(p);
      b.text.row(i) = pairs_.text.row(p);
    }
    for (Index j = 0; j < m; ++j) {
      b.vision_negatives.row(j) = negatives_.vision.row(rng.index(negatives_.size()));
      b.text_negatives.row(j) = negatives_.text.row(rng.index(negatives_.size()));
    }
    return b;
  }

 private:
  explicit ClipSource(const ClipGMM& model) : online_(model) {}

  std::optional<ClipGMM> online_;
  ClipPairs pairs_;
  ClipPairs negatives_;
};

}  // namespace gmmssl
