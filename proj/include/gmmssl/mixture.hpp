#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gmmssl/error.hpp"
#include "gmmssl/linalg.hpp"
#include "gmmssl/random.hpp"

namespace gmmssl {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace detail {

inline void check_weights(const VectorXd& w) {
  if (w.size() < 1) throw InvalidArgument("mixture needs at least one component");
  for (Index k = 0; k < w.size(); ++k)
    if (!(w(k) > 0.0) || !std::isfinite(w(k)))
      throw InvalidArgument("mixture weights must be strictly positive (component " +
                            std::to_string(k) + ")");
  if (std::abs(w.sum() - 1.0) > 1e-12)
    throw InvalidArgument("mixture weights must sum to 1");
}

// Index drawn from a categorical distribution by inverse CDF. Zero entries
// are never selected.
inline int sample_categorical(const VectorXd& w, Rng& rng) {
  const double u = rng.uniform() * w.sum();
  double acc = 0.0;
  int last = 0;
  for (Index k = 0; k < w.size(); ++k) {
    if (w(k) <= 0.0) continue;
    acc += w(k);
    last = static_cast<int>(k);
    if (u < acc) return last;
  }
  return last;
}

}  // namespace detail

/// Gaussian mixture whose components share one covariance matrix:
/// F = sum_k w_k N(mu_k, Sigma). Immutable after construction; the
/// Cholesky factor of Sigma is computed once and reused for sampling and
/// density evaluation.
class SharedGMM {
 public:
  /// `means` is d x K, one column per component.
  SharedGMM(VectorXd weights, MatrixXd means, MatrixXd covariance)
      : weights_(std::move(weights)),
        means_(std::move(means)),
        covariance_(std::move(covariance)) {
    detail::check_weights(weights_);
    if (means_.cols() != weights_.size())
      throw InvalidArgument("number of means must equal number of weights");
    if (covariance_.rows() != covariance_.cols())
      throw InvalidArgument("covariance must be square");
    if (means_.rows() != covariance_.rows())
      throw InvalidArgument("mean dimension must equal covariance order");
    if (!means_.allFinite() || !covariance_.allFinite())
      throw InvalidArgument("mixture parameters must be finite");
    if (linalg::max_asymmetry(covariance_) > 1e-12)
      throw InvalidArgument("covariance must be symmetric");
    llt_.compute(covariance_);
    if (llt_.info() != Eigen::Success)
      throw InvalidArgument("covariance is not positive definite");
    const MatrixXd l = llt_.matrixL();
    if ((l.diagonal().array() <= 0.0).any())
      throw InvalidArgument("covariance is not positive definite");
    log_det_ = 2.0 * l.diagonal().array().log().sum();
  }

  Index dim() const { return means_.rows(); }
  Index components() const { return weights_.size(); }
  const VectorXd& weights() const { return weights_; }
  const MatrixXd& means() const { return means_; }
  const MatrixXd& covariance() const { return covariance_; }
  const Eigen::LLT<MatrixXd>& cholesky() const { return llt_; }
  double log_det_covariance() const { return log_det_; }

  /// sum_k w_k mu_k
  VectorXd mean() const { return means_ * weights_; }

  /// Inter-component scatter M = sum_k w_k mu_k mu_k^T.
  MatrixXd between_scatter() const {
    return linalg::symmetrize(means_ * weights_.asDiagonal() * means_.transpose());
  }

  /// E[x x^T] = M + Sigma.
  MatrixXd second_moment() const { return between_scatter() + covariance_; }

 private:
  VectorXd weights_;
  MatrixXd means_;
  MatrixXd covariance_;
  Eigen::LLT<MatrixXd> llt_;
  double log_det_ = 0.0;
};

/// Augmentation-enabled distribution over pairs: with probability delta both
/// points share a component, otherwise the components are independent.
struct AeDConfig {
  AeDConfig(SharedGMM base_model, double bias) : base(std::move(base_model)), delta(bias) {
    if (!(delta >= 0.0 && delta <= 1.0)) throw InvalidArgument("delta must lie in [0, 1]");
  }

  SharedGMM base;
  double delta;
};

/// Two-modality mixture with a shared component index. Each modality's
/// marginal is itself a SharedGMM with the common weights.
class ClipGMM {
 public:
  ClipGMM(VectorXd weights, MatrixXd means_v, MatrixXd cov_v, MatrixXd means_t, MatrixXd cov_t)
      : vision_(weights, std::move(means_v), std::move(cov_v)),
        text_(std::move(weights), std::move(means_t), std::move(cov_t)) {}

  Index components() const { return vision_.components(); }
  const VectorXd& weights() const { return vision_.weights(); }
  const SharedGMM& vision() const { return vision_; }
  const SharedGMM& text() const { return text_; }

  /// E[x_v x_t^T] = sum_k w_k mu_{V,k} mu_{T,k}^T.
  MatrixXd cross_moment() const {
    return vision_.means() * weights().asDiagonal() * text_.means().transpose();
  }

 private:
  SharedGMM vision_;
  SharedGMM text_;
};

/// Points stored row-wise (n x d) with their generating component.
struct LabeledSamples {
  MatrixXd points;
  std::vector<int> labels;

  Index size() const { return points.rows(); }
};

struct AeDPairs {
  MatrixXd anchors;
  MatrixXd augments;
  std::vector<int> anchor_labels;
  std::vector<int> augment_labels;

  Index size() const { return anchors.rows(); }
};

struct ClipPairs {
  MatrixXd vision;
  MatrixXd text;
  std::vector<int> labels;

  Index size() const { return vision.rows(); }
};

namespace detail {

// Writes mu_k + L z into row i of out.
inline void draw_component(const SharedGMM& model, int k, Rng& rng, MatrixXd& out, Index row) {
  VectorXd z = rng.normal_vector(model.dim());
  out.row(row) = (model.means().col(k) + model.cholesky().matrixL() * z).transpose();
}

inline void check_count(Index n) {
  if (n < 1) throw InvalidArgument("sample count must be at least 1");
}

}  // namespace detail

inline LabeledSamples sample_gmm(const SharedGMM& model, Index n, Rng& rng) {
  detail::check_count(n);
  LabeledSamples out{MatrixXd(n, model.dim()), std::vector<int>(static_cast<size_t>(n))};
  for (Index i = 0; i < n; ++i) {
    const int k = detail::sample_categorical(model.weights(), rng);
    out.labels[static_cast<size_t>(i)] = k;
    detail::draw_component(model, k, rng, out.points, i);
  }
  return out;
}

inline AeDPairs sample_aed(const AeDConfig& cfg, Index n, Rng& rng) {
  detail::check_count(n);
  const SharedGMM& model = cfg.base;
  AeDPairs out{MatrixXd(n, model.dim()), MatrixXd(n, model.dim()),
               std::vector<int>(static_cast<size_t>(n)), std::vector<int>(static_cast<size_t>(n))};
  for (Index i = 0; i < n; ++i) {
    int k = detail::sample_categorical(model.weights(), rng);
    int k_hat = k;
    if (!rng.bernoulli(cfg.delta)) k_hat = detail::sample_categorical(model.weights(), rng);
    out.anchor_labels[static_cast<size_t>(i)] = k;
    out.augment_labels[static_cast<size_t>(i)] = k_hat;
    detail::draw_component(model, k, rng, out.anchors, i);
    detail::draw_component(model, k_hat, rng, out.augments, i);
  }
  return out;
}

inline ClipPairs sample_clip(const ClipGMM& model, Index n, Rng& rng) {
  detail::check_count(n);
  ClipPairs out{MatrixXd(n, model.vision().dim()), MatrixXd(n, model.text().dim()),
                std::vector<int>(static_cast<size_t>(n))};
  for (Index i = 0; i < n; ++i) {
    const int k = detail::sample_categorical(model.weights(), rng);
    out.labels[static_cast<size_t>(i)] = k;
    detail::draw_component(model.vision(), k, rng, out.vision, i);
    detail::draw_component(model.text(), k, rng, out.text, i);
  }
  return out;
}

/// log w_k + log N(x; mu_k, Sigma) for every component.
inline VectorXd log_joint(const SharedGMM& model, const VectorXd& x) {
  if (x.size() != model.dim()) throw InvalidArgument("point dimension mismatch");
  const double d = static_cast<double>(model.dim());
  const double norm = -0.5 * (d * std::log(2.0 * M_PI) + model.log_det_covariance());
  VectorXd out(model.components());
  for (Index k = 0; k < model.components(); ++k) {
    const VectorXd y = model.cholesky().matrixL().solve(x - model.means().col(k));
    out(k) = std::log(model.weights()(k)) + norm - 0.5 * y.squaredNorm();
  }
  return out;
}

/// Normalizes log-weights into probabilities with max subtraction.
inline VectorXd softmax(const VectorXd& logits) {
  const double m = logits.maxCoeff();
  VectorXd p = (logits.array() - m).exp().matrix();
  return p / p.sum();
}

/// Pr(z = k | x) for every component.
inline VectorXd posterior(const SharedGMM& model, const VectorXd& x) {
  return softmax(log_joint(model, x));
}

/// The r-dimensional mixture seen through x -> A^T x: means A^T mu_k and
/// covariance A^T Sigma A.
inline SharedGMM project_gmm(const SharedGMM& model, const MatrixXd& a) {
  if (a.rows() != model.dim() || a.cols() < 1)
    throw InvalidArgument("projection shape does not match model dimension");
  const Eigen::VectorXd s = linalg::singular_values(a);
  if (a.cols() > a.rows() || !(s(s.size() - 1) > 1e-10))
    throw DegenerateError("degenerate projection: matrix is not of full column rank");
  MatrixXd cov = linalg::symmetrize(a.transpose() * model.covariance() * a);
  return SharedGMM(model.weights(), a.transpose() * model.means(), std::move(cov));
}

}  // namespace gmmssl
