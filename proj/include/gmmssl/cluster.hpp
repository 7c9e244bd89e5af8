#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gmmssl/error.hpp"
#include "gmmssl/random.hpp"

namespace gmmssl {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Clustering {
  std::vector<int> assignments;
  MatrixXd centroids;  // K x r
  double inertia = 0.0;
  int iterations = 0;
};

namespace detail {

// Squared distances n x K between rows of points and rows of centroids.
inline MatrixXd squared_distances(const MatrixXd& points, const VectorXd& point_norms, const MatrixXd& centroids) {
  MatrixXd d2 = -2.0 * points * centroids.transpose();
  d2.colwise() += point_norms;
  d2.rowwise() += centroids.rowwise().squaredNorm().transpose();
  return d2.cwiseMax(0.0);
}

inline MatrixXd kmeans_plus_plus(const MatrixXd& points, const VectorXd& norms, int k, Rng& rng) {
  const Index n = points.rows();
  MatrixXd centroids(k, points.cols());
  centroids.row(0) = points.row(rng.index(n));
  VectorXd best = squared_distances(points, norms, centroids.topRows(1)).col(0);
  for (int c = 1; c < k; ++c) {
    const double total = best.sum();
    Index pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (pick = 0; pick < n - 1; ++pick) {
        u -= best(pick);
        if (u < 0.0) break;
      }
    } else {
      pick = rng.index(n);
    }
    centroids.row(c) = points.row(pick);
    best = best.cwiseMin(squared_distances(points, norms, centroids.row(c)).col(0));
  }
  return centroids;
}

inline Clustering lloyd(const MatrixXd& points, const VectorXd& norms, MatrixXd centroids, int max_iter) {
  const Index n = points.rows();
  const int k = static_cast<int>(centroids.rows());
  Clustering out;
  out.assignments.assign(static_cast<size_t>(n), -1);
  double previous = std::numeric_limits<double>::infinity();
  VectorXd dist(n);
  for (int it = 0; it < max_iter; ++it) {
    const MatrixXd d2 = squared_distances(points, norms, centroids);
    bool changed = false;
    double inertia = 0.0;
    for (Index i = 0; i < n; ++i) {
      Index j;
      dist(i) = d2.row(i).minCoeff(&j);
      inertia += dist(i);
      if (out.assignments[static_cast<size_t>(i)] != static_cast<int>(j)) changed = true;
      out.assignments[static_cast<size_t>(i)] = static_cast<int>(j);
    }
    if (inertia > previous * (1.0 + 1e-9) + 1e-12)
      throw std::logic_error("k-means inertia increased during Lloyd iterations");
    previous = inertia;
    out.inertia = inertia;
    out.iterations = it + 1;
    out.centroids = centroids;
    if (!changed && it > 0) break;

    MatrixXd sums = MatrixXd::Zero(k, points.cols());
    std::vector<Index> counts(static_cast<size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      const int c = out.assignments[static_cast<size_t>(i)];
      sums.row(c) += points.row(i);
      ++counts[static_cast<size_t>(c)];
    }
    for (int c = 0; c < k; ++c)
      if (counts[static_cast<size_t>(c)] > 0) centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<size_t>(c)]);
    // Empty clusters are re-seeded at the point farthest from its centroid.
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<size_t>(c)] > 0) continue;
      VectorXd far(n);
      for (Index i = 0; i < n; ++i)
        far(i) = (points.row(i) - centroids.row(out.assignments[static_cast<size_t>(i)])).squaredNorm();
      Index p;
      far.maxCoeff(&p);
      centroids.row(c) = points.row(p);
      out.assignments[static_cast<size_t>(p)] = c;
    }
  }
  return out;
}

}  // namespace detail

/// k-means++ seeding followed by Lloyd iterations until the assignment is a
/// fixpoint or max_iter is hit; the lowest-inertia run over `restarts` is
/// returned. Points are rows.
inline Clustering kmeans(const MatrixXd& points, int k, int restarts, int max_iter, Rng& rng) {
  if (k < 1 || points.rows() < k) throw InvalidArgument("kmeans requires n >= K >= 1");
  if (restarts < 1 || max_iter < 1) throw InvalidArgument("kmeans requires restarts, max_iter >= 1");
  const VectorXd norms = points.rowwise().squaredNorm();
  Clustering best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    MatrixXd init = detail::kmeans_plus_plus(points, norms, k, rng);
    Clustering c = detail::lloyd(points, norms, std::move(init), max_iter);
    if (c.inertia < best.inertia) best = std::move(c);
  }
  return best;
}

/// Counts n_ij of (true label i, predicted label j), labels compacted to
/// 0..K-1 in order of first appearance.
struct ContingencyTable {
  Eigen::MatrixXi counts;
  std::vector<long> row_sums;
  std::vector<long> col_sums;
  long n = 0;

  ContingencyTable(const std::vector<int>& truth, const std::vector<int>& pred) {
    if (truth.size() != pred.size()) throw InvalidArgument("label vectors differ in length");
    std::map<int, int> ti, pi;
    for (int t : truth) ti.emplace(t, static_cast<int>(ti.size()));
    for (int p : pred) pi.emplace(p, static_cast<int>(pi.size()));
    counts = Eigen::MatrixXi::Zero(static_cast<Index>(ti.size()), static_cast<Index>(pi.size()));
    for (size_t i = 0; i < truth.size(); ++i) ++counts(ti[truth[i]], pi[pred[i]]);
    n = static_cast<long>(truth.size());
    row_sums.resize(ti.size());
    col_sums.resize(pi.size());
    for (Index i = 0; i < counts.rows(); ++i) row_sums[static_cast<size_t>(i)] = counts.row(i).sum();
    for (Index j = 0; j < counts.cols(); ++j) col_sums[static_cast<size_t>(j)] = counts.col(j).sum();
  }

  Index true_clusters() const { return counts.rows(); }
  Index pred_clusters() const { return counts.cols(); }
};

namespace detail {

inline double pairs(double x) { return 0.5 * x * (x - 1.0); }

inline double entropy(const std::vector<long>& sums, long n) {
  double h = 0.0;
  for (long s : sums)
    if (s > 0) {
      const double p = static_cast<double>(s) / static_cast<double>(n);
      h -= p * std::log(p);
    }
  return h;
}

// Both partitions trivial in the same way: one cluster each, or all
// singletons each. The chance-adjusted scores are 0/0 there and both
// partitions coincide, so they are defined as 1.
inline bool degenerate_match(const ContingencyTable& t) {
  return (t.true_clusters() == 1 && t.pred_clusters() == 1) ||
         (t.true_clusters() == t.n && t.pred_clusters() == t.n);
}

}  // namespace detail

/// Adjusted Rand index from pair counts of the contingency table.
inline double ari(const std::vector<int>& truth, const std::vector<int>& pred) {
  const ContingencyTable t(truth, pred);
  if (t.n == 0) throw InvalidArgument("ari of empty labelings");
  if (detail::degenerate_match(t)) return 1.0;
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (Index i = 0; i < t.counts.rows(); ++i)
    for (Index j = 0; j < t.counts.cols(); ++j) index += detail::pairs(t.counts(i, j));
  for (long a : t.row_sums) sum_a += detail::pairs(static_cast<double>(a));
  for (long b : t.col_sums) sum_b += detail::pairs(static_cast<double>(b));
  const double expected = sum_a * sum_b / detail::pairs(static_cast<double>(t.n));
  const double max_index = 0.5 * (sum_a + sum_b);
  return (index - expected) / (max_index - expected);
}

inline double mutual_information(const ContingencyTable& t) {
  const double n = static_cast<double>(t.n);
  double mi = 0.0;
  for (Index i = 0; i < t.counts.rows(); ++i)
    for (Index j = 0; j < t.counts.cols(); ++j) {
      const double nij = t.counts(i, j);
      if (nij > 0)
        mi += nij / n *
              std::log(n * nij /
                       (static_cast<double>(t.row_sums[static_cast<size_t>(i)]) * static_cast<double>(t.col_sums[static_cast<size_t>(j)])));
    }
  return mi;
}

/// E[MI] under the permutation (hypergeometric) model with fixed marginals.
inline double expected_mutual_information(const ContingencyTable& t) {
  const long n = t.n;
  const double nd = static_cast<double>(n);
  const double lg_n = std::lgamma(nd + 1.0);
  double emi = 0.0;
  for (long a : t.row_sums)
    for (long b : t.col_sums) {
      const double ad = static_cast<double>(a), bd = static_cast<double>(b);
      const double lg_fixed = std::lgamma(ad + 1.0) + std::lgamma(bd + 1.0) + std::lgamma(nd - ad + 1.0) +
                              std::lgamma(nd - bd + 1.0) - lg_n;
      for (long nij = std::max(1L, a + b - n); nij <= std::min(a, b); ++nij) {
        const double x = static_cast<double>(nij);
        const double log_p = lg_fixed - std::lgamma(x + 1.0) - std::lgamma(ad - x + 1.0) -
                             std::lgamma(bd - x + 1.0) - std::lgamma(nd - ad - bd + x + 1.0);
        emi += x / nd * std::log(nd * x / (ad * bd)) * std::exp(log_p);
      }
    }
  return emi;
}

enum class AmiNormalization { kArithmetic, kGeometric, kMin, kMax };

/// Adjusted mutual information (natural log). Negative values are legitimate
/// and are returned as computed.
inline double ami(const std::vector<int>& truth, const std::vector<int>& pred,
                  AmiNormalization norm = AmiNormalization::kArithmetic) {
  const ContingencyTable t(truth, pred);
  if (t.n == 0) throw InvalidArgument("ami of empty labelings");
  if (detail::degenerate_match(t)) return 1.0;
  const double mi = mutual_information(t);
  const double emi = expected_mutual_information(t);
  const double ha = detail::entropy(t.row_sums, t.n);
  const double hb = detail::entropy(t.col_sums, t.n);
  double normalizer = 0.0;
  switch (norm) {
    case AmiNormalization::kArithmetic: normalizer = 0.5 * (ha + hb); break;
    case AmiNormalization::kGeometric: normalizer = std::sqrt(ha * hb); break;
    case AmiNormalization::kMin: normalizer = std::min(ha, hb); break;
    case AmiNormalization::kMax: normalizer = std::max(ha, hb); break;
  }
  const double denom = normalizer - emi;
  if (denom == 0.0) return mi - emi == 0.0 ? 1.0 : 0.0;
  return (mi - emi) / denom;
}

struct ClusterScores {
  double ari = 0.0;
  double ami = 0.0;
};

/// Projects rows of `points` through A^T, clusters with k-means and scores
/// the result against `labels`.
inline ClusterScores evaluate_projection(const MatrixXd& a, const MatrixXd& points, const std::vector<int>& labels,
                                         int k, int restarts, Rng& rng, int max_iter = 300) {
  if (a.cols() < 1) throw InvalidArgument("evaluate_projection: projection has no columns");
  if (a.rows() != points.cols()) throw InvalidArgument("evaluate_projection: dimension mismatch");
  if (static_cast<Index>(labels.size()) != points.rows())
    throw InvalidArgument("evaluate_projection: labels and points differ in count");
  const Clustering c = kmeans(points * a, k, restarts, max_iter, rng);
  return {ari(labels, c.assignments), ami(labels, c.assignments)};
}

}  // namespace gmmssl
