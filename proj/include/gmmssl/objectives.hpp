#pragma once

#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "gmmssl/error.hpp"
#include "gmmssl/linalg.hpp"
#include "gmmssl/mixture.hpp"
#include "gmmssl/random.hpp"

namespace gmmssl {

/// Row-aligned positive pairs (anchors[i], augments[i]) plus a pool of
/// negatives shared by every anchor.
struct Batch {
  MatrixXd anchors;
  MatrixXd augments;
  MatrixXd negatives;

  void validate(bool needs_negatives) const {
    if (anchors.rows() < 1 || anchors.rows() != augments.rows())
      throw InvalidArgument("batch anchors and augments must be non-empty and row-aligned");
    if (anchors.cols() != augments.cols())
      throw InvalidArgument("batch anchors and augments differ in dimension");
    if (needs_negatives && (negatives.rows() < 1 || negatives.cols() != anchors.cols()))
      throw InvalidArgument("batch negatives missing or of the wrong dimension");
  }
};

/// Row-aligned (vision, text) pairs and vision-side negatives. text_negatives
/// is only read by the symmetric variant.
struct ClipBatch {
  MatrixXd vision;
  MatrixXd text;
  MatrixXd vision_negatives;
  MatrixXd text_negatives;

  void validate(bool symmetric) const {
    if (vision.rows() < 1 || vision.rows() != text.rows())
      throw InvalidArgument("clip batch sides must be non-empty and row-aligned");
    if (vision_negatives.rows() < 1 || vision_negatives.cols() != vision.cols())
      throw InvalidArgument("clip batch vision negatives missing or of the wrong dimension");
    if (symmetric && (text_negatives.rows() < 1 || text_negatives.cols() != text.cols()))
      throw InvalidArgument("clip batch text negatives missing or of the wrong dimension");
  }
};

struct SiamConfig {
  explicit SiamConfig(double xi_weight, double bound = 1.0) : xi(xi_weight), spectral_bound(bound) {
    if (!(xi > 0.0)) throw InvalidArgument("SimSiam regularization weight xi must be positive");
  }

  // xi = 0, only for control runs: nothing then prevents the map from
  // picking up directions outside the Fisher subspace.
  static SiamConfig unregularized(double bound = 1.0) {
    SiamConfig c(1.0, bound);
    c.xi = 0.0;
    return c;
  }

  double xi;
  double spectral_bound;
};

namespace detail {

inline void check_projection(const MatrixXd& a, Index d) {
  if (a.rows() != d || a.cols() < 1) throw InvalidArgument("projection shape does not match data");
}

// Row-wise log((1/m) sum_j exp(s_ij)) with max subtraction; fills the
// softmax weights p_ij when requested. Takes s transposed (m x n) so that each
// anchor's similarities are contiguous.
inline VectorXd log_mean_exp_rows(const MatrixXd& s_t, MatrixXd* weights) {
  const Index n = s_t.cols();
  const double log_m = std::log(static_cast<double>(s_t.rows()));
  VectorXd out(n);
  MatrixXd e(s_t.rows(), n);
  for (Index i = 0; i < n; ++i) {
    const double col_max = s_t.col(i).maxCoeff();
    if (!std::isfinite(col_max)) throw NumericalError("non-finite similarity in log-sum-exp", i);
    e.col(i) = (s_t.col(i).array() - col_max).exp().matrix();
    const double total = e.col(i).sum();
    out(i) = col_max + std::log(total) - log_m;
    if (!std::isfinite(out(i))) throw NumericalError("non-finite log-sum-exp", i);
    if (weights) e.col(i) /= total;
  }
  if (weights) *weights = e.transpose();
  return out;
}

inline void check_finite_scalar(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericalError(what, -1);
}

}  // namespace detail

/// Repulsive term of the empirical InfoNCE loss, (1/n) sum_i log((1/m)
/// sum_j exp(x_i^T B xneg_j)), as a function of B = A A^T.
inline double infonce_repulsive(const MatrixXd& b, const Batch& batch) {
  batch.validate(true);
  const MatrixXd s_t = batch.negatives * b * batch.anchors.transpose();
  return detail::log_mean_exp_rows(s_t, nullptr).mean();
}

/// Empirical InfoNCE loss
///   -(1/n) sum_i (A^T x_i)^T (A^T xhat_i)
///   + (1/n) sum_i log((1/m) sum_j exp((A^T x_i)^T (A^T xneg_j))).
/// When `grad` is non-null it receives the exact d x r gradient.
inline double infonce_loss(const MatrixXd& a, const Batch& batch, MatrixXd* grad = nullptr,
                           MatrixXd* softmax_weights = nullptr) {
  batch.validate(true);
  detail::check_projection(a, batch.anchors.cols());
  const double n = static_cast<double>(batch.anchors.rows());
  const MatrixXd z = batch.anchors * a;
  const MatrixXd z_hat = batch.augments * a;
  const MatrixXd z_neg = batch.negatives * a;
  const double attract = (z.array() * z_hat.array()).sum() / n;
  const MatrixXd s_t = z_neg * z.transpose();
  MatrixXd p;
  const bool need_p = grad != nullptr || softmax_weights != nullptr;
  const VectorXd lse = detail::log_mean_exp_rows(s_t, need_p ? &p : nullptr);
  const double loss = -attract + lse.mean();
  detail::check_finite_scalar(loss, "non-finite InfoNCE loss");
  if (grad) {
    *grad = (-(batch.anchors.transpose() * z_hat) - batch.augments.transpose() * z +
             batch.anchors.transpose() * (p * z_neg) + batch.negatives.transpose() * (p.transpose() * z)) /
            n;
  }
  if (softmax_weights) *softmax_weights = std::move(p);
  return loss;
}

inline MatrixXd infonce_grad(const MatrixXd& a, const Batch& batch) {
  MatrixXd g;
  infonce_loss(a, batch, &g);
  return g;
}

/// Modified SimSiam loss -(1/n) sum_i (A^T x_i)^T (A^T xhat_i) + xi (1/n)
/// sum_i ||A^T x_i||^2. Negatives are not read.
inline double simsiam_loss(const MatrixXd& a, const Batch& batch, const SiamConfig& cfg,
                           MatrixXd* grad = nullptr) {
  batch.validate(false);
  detail::check_projection(a, batch.anchors.cols());
  const double n = static_cast<double>(batch.anchors.rows());
  const MatrixXd z = batch.anchors * a;
  const MatrixXd z_hat = batch.augments * a;
  const double loss = (-(z.array() * z_hat.array()).sum() + cfg.xi * z.squaredNorm()) / n;
  detail::check_finite_scalar(loss, "non-finite SimSiam loss");
  if (grad) {
    *grad = (-(batch.anchors.transpose() * z_hat) - batch.augments.transpose() * z +
             2.0 * cfg.xi * (batch.anchors.transpose() * z)) /
            n;
  }
  return loss;
}

inline MatrixXd simsiam_grad(const MatrixXd& a, const Batch& batch, const SiamConfig& cfg) {
  MatrixXd g;
  simsiam_loss(a, batch, cfg, &g);
  return g;
}

namespace detail {

// (xi - delta) M + xi Sigma, valid for mean-centred mixtures only.
inline MatrixXd simsiam_population_matrix(const SharedGMM& model, double delta, double xi) {
  const double scale = std::max(1.0, model.means().cwiseAbs().maxCoeff());
  if (model.mean().cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw InvalidArgument("population form requires centered means");
  return (xi - delta) * model.between_scatter() + xi * model.covariance();
}

}  // namespace detail

/// <A A^T, (xi - delta) M + xi Sigma>, the closed form of the SimSiam loss
/// under the augmentation-enabled distribution with centred means.
inline double simsiam_population_loss(const MatrixXd& a, const SharedGMM& model, double delta, double xi,
                                      MatrixXd* grad = nullptr) {
  detail::check_projection(a, model.dim());
  const MatrixXd c = detail::simsiam_population_matrix(model, delta, xi);
  const MatrixXd ca = c * a;
  if (grad) *grad = 2.0 * ca;
  return (a.array() * ca.array()).sum();
}

inline MatrixXd simsiam_population_grad(const MatrixXd& a, const SharedGMM& model, double delta, double xi) {
  MatrixXd g;
  simsiam_population_loss(a, model, delta, xi, &g);
  return g;
}

/// CLIP InfoNCE loss with text anchors and vision negatives:
///   -(1/n) sum_i (A_t^T xt_i)^T (A_v^T xv_i)
///   + (1/n) sum_i log((1/m) sum_j exp((A_t^T xt_i)^T (A_v^T xvneg_j))).
/// `symmetric` averages this repulsion with the mirrored one (vision anchors
/// against text negatives), as in practical CLIP training.
inline double clip_loss(const MatrixXd& a_v, const MatrixXd& a_t, const ClipBatch& batch,
                        MatrixXd* grad_v = nullptr, MatrixXd* grad_t = nullptr, bool symmetric = false) {
  batch.validate(symmetric);
  detail::check_projection(a_v, batch.vision.cols());
  detail::check_projection(a_t, batch.text.cols());
  if (a_v.cols() != a_t.cols()) throw InvalidArgument("clip projections must share the output dimension");
  const double n = static_cast<double>(batch.vision.rows());
  const MatrixXd zv = batch.vision * a_v;
  const MatrixXd zt = batch.text * a_t;
  const MatrixXd zv_neg = batch.vision_negatives * a_v;
  const double attract = (zv.array() * zt.array()).sum() / n;
  const bool want_grad = grad_v || grad_t;

  MatrixXd p;
  const VectorXd lse_t = detail::log_mean_exp_rows(zv_neg * zt.transpose(), want_grad ? &p : nullptr);
  const double w = symmetric ? 0.5 : 1.0;
  double loss = -attract + w * lse_t.mean();

  MatrixXd gv, gt;
  if (want_grad) {
    gv = (-(batch.vision.transpose() * zt) + w * batch.vision_negatives.transpose() * (p.transpose() * zt)) / n;
    gt = (-(batch.text.transpose() * zv) + w * batch.text.transpose() * (p * zv_neg)) / n;
  }
  if (symmetric) {
    const MatrixXd zt_neg = batch.text_negatives * a_t;
    MatrixXd q;
    const VectorXd lse_v = detail::log_mean_exp_rows(zt_neg * zv.transpose(), want_grad ? &q : nullptr);
    loss += 0.5 * lse_v.mean();
    if (want_grad) {
      gv += 0.5 * batch.vision.transpose() * (q * zt_neg) / n;
      gt += 0.5 * batch.text_negatives.transpose() * (q.transpose() * zv) / n;
    }
  }
  detail::check_finite_scalar(loss, "non-finite CLIP loss");
  if (grad_v) *grad_v = std::move(gv);
  if (grad_t) *grad_t = std::move(gt);
  return loss;
}

inline std::pair<MatrixXd, MatrixXd> clip_grads(const MatrixXd& a_v, const MatrixXd& a_t, const ClipBatch& batch,
                                                bool symmetric = false) {
  MatrixXd gv, gt;
  clip_loss(a_v, a_t, batch, &gv, &gt, symmetric);
  return {std::move(gv), std::move(gt)};
}

/// The CLIP loss sees the maps only through A_t A_v^T, so columns of A_v paired
/// with null columns of A_t are unconstrained. The identified parts are
/// A_v A_t^T (vision side, d1 x d2) and A_t A_v^T (text side).
inline std::pair<MatrixXd, MatrixXd> clip_coupled_maps(const MatrixXd& a_v, const MatrixXd& a_t) {
  if (a_v.cols() != a_t.cols()) throw InvalidArgument("clip projections must share the output dimension");
  MatrixXd vision = a_v * a_t.transpose();
  MatrixXd text = vision.transpose();
  return {std::move(vision), std::move(text)};
}

/// (1/n) sum_i ||A^T x_i||^2 over rows of `sample`, for A with orthonormal
/// columns.
inline double spectral_objective(const MatrixXd& a, const MatrixXd& sample) {
  detail::check_projection(a, sample.cols());
  const MatrixXd gram = a.transpose() * a;
  if ((gram - MatrixXd::Identity(a.cols(), a.cols())).cwiseAbs().maxCoeff() > 1e-8)
    throw InvalidArgument("spectral objective requires A^T A = I");
  if (sample.rows() < 1) throw InvalidArgument("spectral objective needs samples");
  return (sample * a).squaredNorm() / static_cast<double>(sample.rows());
}

/// Midpoint-convexity probe of the InfoNCE repulsive term in B: for random
/// PSD B1, B2 and lambda in (0, 1) checks
///   f(lambda B1 + (1 - lambda) B2) <= lambda f(B1) + (1 - lambda) f(B2) + 1e-9.
inline bool convexity_probe(const Batch& batch, int trials, Rng& rng) {
  if (trials < 1) throw InvalidArgument("convexity probe needs at least one trial");
  batch.validate(true);
  const Index d = batch.anchors.cols();
  // Keep exponents moderate so the check is not dominated by overflow.
  const double scale = 1.0 / std::max(1.0, batch.anchors.cwiseAbs().maxCoeff() *
                                               batch.negatives.cwiseAbs().maxCoeff() * static_cast<double>(d));
  for (int t = 0; t < trials; ++t) {
    const MatrixXd g1 = rng.normal_matrix(d, d);
    const MatrixXd g2 = rng.normal_matrix(d, d);
    const MatrixXd b1 = scale * g1 * g1.transpose();
    const MatrixXd b2 = scale * g2 * g2.transpose();
    const double lambda = 0.01 + 0.98 * rng.uniform();
    const double mid = infonce_repulsive(lambda * b1 + (1.0 - lambda) * b2, batch);
    const double chord = lambda * infonce_repulsive(b1, batch) + (1.0 - lambda) * infonce_repulsive(b2, batch);
    if (!(mid <= chord + 1e-9)) return false;
  }
  return true;
}

}  // namespace gmmssl
