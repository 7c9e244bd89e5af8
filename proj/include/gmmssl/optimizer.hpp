#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gmmssl/error.hpp"
#include "gmmssl/linalg.hpp"
#include "gmmssl/random.hpp"
#include "gmmssl/subspace.hpp"

namespace gmmssl {

struct TrainConfig {
  int steps = 5000;
  double lr = 0.05;
  double lr_decay = 0.5;     // applied when the smoothed loss plateaus
  int plateau_patience = 50;  // steps without improvement before decaying
  double smoothing = 0.9;     // EMA factor for loss and gradient norm
  double min_lr = 1e-3;     // decay floor; noisy batches keep triggering the plateau rule
  double retry_lr_factor = 0.1;  // lr multiplier for the single retry after divergence
  // A loss above loss_0 + divergence_factor * (1 + |loss_0|) counts as
  // divergence, like a non-finite one. Runaway iterates can stay finite for
  // hundreds of steps.
  double divergence_factor = 1e4;
  int batch_n = 512;
  int batch_m = 512;
  std::uint64_t seed = 0;
  std::optional<double> spectral_projection;
  double tol_grad = 1e-6;
  double init_scale = 0.1;
  int checkpoint_every = 0;  // 0 disables principal-angle checkpoints

  void validate() const {
    if (steps < 1) throw InvalidArgument("train config: steps must be >= 1");
    if (!(lr > 0.0)) throw InvalidArgument("train config: lr must be > 0");
    if (!(tol_grad > 0.0)) throw InvalidArgument("train config: tol_grad must be > 0");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw InvalidArgument("train config: lr_decay must lie in (0, 1]");
    if (!(divergence_factor > 0.0)) throw InvalidArgument("train config: divergence_factor must be > 0");
    if (!(min_lr >= 0.0)) throw InvalidArgument("train config: min_lr must be >= 0");
    if (!(retry_lr_factor > 0.0)) throw InvalidArgument("train config: retry_lr_factor must be > 0");
    if (!(smoothing >= 0.0 && smoothing < 1.0)) throw InvalidArgument("train config: smoothing must lie in [0, 1)");
    if (batch_n < 1 || batch_m < 1) throw InvalidArgument("train config: batch sizes must be >= 1");
    if (spectral_projection && !(*spectral_projection > 0.0))
      throw InvalidArgument("train config: spectral bound must be > 0");
  }
};

struct TrainTrace {
  std::vector<double> loss;
  std::vector<double> grad_norm;
  std::vector<double> best_loss;  // running minimum of the smoothed loss
  std::vector<double> lr;
  std::vector<int> checkpoint_steps;
  std::vector<double> checkpoint_angle;  // max principal angle vs reference, radians
  std::vector<double> checkpoint_sigma_max;
  int best_step = -1;
  bool converged = false;
  bool retried = false;
  // Spectral norm fell below 0.1 by the end of the run (SimSiam collapse).
  bool collapsed = false;

  std::size_t steps() const { return loss.size(); }
};

/// Streams step,loss,grad_norm,max_principal_angle; the angle column is empty
/// for steps without a checkpoint.
inline void write_trace_csv(const TrainTrace& trace, std::ostream& out) {
  out << "step,loss,grad_norm,max_principal_angle\n";
  out.precision(17);
  std::size_t c = 0;
  for (std::size_t s = 0; s < trace.loss.size(); ++s) {
    out << s << ',' << trace.loss[s] << ',' << trace.grad_norm[s] << ',';
    if (c < trace.checkpoint_steps.size() && static_cast<std::size_t>(trace.checkpoint_steps[c]) == s)
      out << trace.checkpoint_angle[c++];
    out << '\n';
  }
}

class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, TrainTrace trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}

  const TrainTrace& trace() const { return trace_; }

 private:
  TrainTrace trace_;
};

/// Loss and gradient at A for a given step. The step index lets stochastic
/// objectives draw a batch deterministically from (seed, step).
using Objective = std::function<double(const MatrixXd& a, std::int64_t step, MatrixXd& grad)>;

/// Clips singular values at `bound`: A = U S V^T -> U min(S, bound) V^T.
inline MatrixXd spectral_clip(const MatrixXd& a, double bound) {
  if (!(bound > 0.0)) throw InvalidArgument("spectral bound must be positive");
  Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& s = svd.singularValues();
  if (s.size() == 0 || s(0) <= bound) return a;
  const VectorXd clipped = s.cwiseMin(bound);
  return svd.matrixU() * clipped.asDiagonal() * svd.matrixV().transpose();
}

/// Gaussian d x r matrix with entries N(0, 1) * scale / sqrt(d), redrawn
/// until its smallest singular value exceeds 1e-8.
inline MatrixXd init_projection(Index d, Index r, double scale, Rng& rng) {
  if (d < 1 || r < 1) throw InvalidArgument("init_projection: dimensions must be positive");
  if (!(scale > 0.0)) throw InvalidArgument("init_projection: scale must be positive");
  if (r > d)
    std::clog << "gmmssl: warning: init_projection with r = " << r << " > d = " << d
              << "; the map cannot have full column rank\n";
  for (int attempt = 0; attempt < 100; ++attempt) {
    MatrixXd a = rng.normal_matrix(d, r) * (scale / std::sqrt(static_cast<double>(d)));
    const VectorXd s = linalg::singular_values(a);
    if (s(s.size() - 1) > 1e-8) return a;
  }
  throw DegenerateError("init_projection: could not draw a well-conditioned matrix");
}

struct TrainResult {
  MatrixXd a;  // best iterate
  TrainTrace trace;
};

namespace detail {

inline TrainResult train_once(const Objective& objective, const MatrixXd& init, const TrainConfig& cfg,
                              double lr0, const Subspace* reference) {
  TrainResult result{init, {}};
  TrainTrace& tr = result.trace;
  MatrixXd a = init;
  if (cfg.spectral_projection) a = spectral_clip(a, *cfg.spectral_projection);
  MatrixXd grad(a.rows(), a.cols());
  double lr = lr0;
  double ema_loss = 0.0, ema_grad = 0.0, best = std::numeric_limits<double>::infinity();
  double plateau_ref = std::numeric_limits<double>::infinity();
  int since_improve = 0;
  const double alpha = 1.0 - cfg.smoothing;
  double ceiling = std::numeric_limits<double>::infinity();

  for (int step = 0; step < cfg.steps; ++step) {
    const double loss = objective(a, step, grad);
    const double gnorm = grad.norm();
    if (!std::isfinite(loss) || !std::isfinite(gnorm))
      throw TrainingAborted("non-finite loss at step " + std::to_string(step), tr);
    if (step == 0) ceiling = loss + cfg.divergence_factor * (1.0 + std::abs(loss));
    if (loss > ceiling) throw TrainingAborted("loss diverged at step " + std::to_string(step), tr);

    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
      tr.checkpoint_steps.push_back(step);
      double angle = std::numeric_limits<double>::quiet_NaN();
      if (reference) angle = containment_report(a, *reference, kTrainedRankTol).containment_angle();
      tr.checkpoint_angle.push_back(angle);
      tr.checkpoint_sigma_max.push_back(linalg::spectral_norm(a));
    }

    ema_loss = step == 0 ? loss : cfg.smoothing * ema_loss + alpha * loss;
    ema_grad = step == 0 ? gnorm : cfg.smoothing * ema_grad + alpha * gnorm;
    if (ema_loss < best) {
      best = ema_loss;
      result.a = a;
      tr.best_step = step;
    }
    tr.loss.push_back(loss);
    tr.grad_norm.push_back(gnorm);
    tr.best_loss.push_back(best);
    tr.lr.push_back(lr);

    if (ema_grad < cfg.tol_grad) {
      tr.converged = true;
      break;
    }
    if (ema_loss < plateau_ref - 1e-12 * std::abs(plateau_ref)) {
      plateau_ref = ema_loss;
      since_improve = 0;
    } else if (++since_improve >= cfg.plateau_patience) {
      lr = std::max(std::min(lr, cfg.min_lr), lr * cfg.lr_decay);
      since_improve = 0;
      plateau_ref = ema_loss;
    }

    a -= lr * grad;
    if (cfg.spectral_projection) a = spectral_clip(a, *cfg.spectral_projection);
    if (!a.allFinite()) throw TrainingAborted("non-finite iterate after step " + std::to_string(step), tr);
  }
  tr.collapsed = linalg::spectral_norm(result.a) < 0.1;
  return result;
}

}  // namespace detail

/// Gradient descent A <- A - lr grad, optionally followed by projection onto
/// {||A||_2 <= bound}. Stops after cfg.steps or once the smoothed gradient
/// norm drops below tol_grad, and returns the iterate with the lowest
/// smoothed loss. A divergent run is retried once from `init` with the
/// learning rate scaled by retry_lr_factor.
inline TrainResult train(const Objective& objective, const MatrixXd& init, const TrainConfig& cfg,
                         const Subspace* reference = nullptr) {
  cfg.validate();
  if (init.size() == 0 || !init.allFinite()) throw InvalidArgument("train: invalid initial map");
  try {
    return detail::train_once(objective, init, cfg, cfg.lr, reference);
  } catch (const TrainingAborted&) {
    try {
      TrainResult r = detail::train_once(objective, init, cfg, cfg.lr * cfg.retry_lr_factor, reference);
      r.trace.retried = true;
      return r;
    } catch (const TrainingAborted& second) {
      TrainTrace t = second.trace();
      t.retried = true;
      throw TrainingAborted(std::string(second.what()) + " (after lr retry)", std::move(t));
    }
  }
}

}  // namespace gmmssl
