#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "gmmssl/cluster.hpp"
#include "oracles.hpp"

using namespace gmmssl;

namespace {

std::vector<int> sizes_of(const std::vector<int>& labels) {
  std::map<int, int> c;
  for (int l : labels) ++c[l];
  std::vector<int> s;
  for (auto& [k, v] : c) s.push_back(v);
  std::sort(s.begin(), s.end());
  return s;
}

std::vector<int> labels_from_sizes(const std::vector<int>& sizes) {
  std::vector<int> out;
  for (std::size_t k = 0; k < sizes.size(); ++k) out.insert(out.end(), static_cast<std::size_t>(sizes[k]), static_cast<int>(k));
  return out;
}

}  // namespace

TEST(Ari, SpecExamples) {
  EXPECT_DOUBLE_EQ(ari({0, 0, 1, 1}, {0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(ari({0, 0, 1, 1}, {1, 1, 0, 0}), 1.0);
  EXPECT_NEAR(ari({0, 0, 1, 1}, {0, 1, 0, 1}), -0.5, 1e-15);
  EXPECT_NEAR(oracle::ari_pairs({0, 0, 1, 1}, {0, 1, 0, 1}), -0.5, 1e-15);
}

TEST(Ari, DegenerateConventions) {
  EXPECT_DOUBLE_EQ(ari({3, 3, 3}, {1, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(ari({0, 1, 2}, {2, 0, 1}), 1.0);
  EXPECT_DOUBLE_EQ(ari({0, 0, 0, 0}, {0, 1, 2, 3}), 0.0);
  EXPECT_THROW(ari({0, 1}, {0}), InvalidArgument);
  EXPECT_THROW(ari({}, {}), InvalidArgument);
}

TEST(Ami, SpecExamples) {
  EXPECT_DOUBLE_EQ(ami({0, 1, 1, 2}, {5, 7, 7, 9}), 1.0);
  // One side constant: MI = E[MI] = 0 while the normalizer is positive.
  EXPECT_NEAR(ami({0, 0, 0, 0, 0, 0, 0, 0}, {0, 0, 0, 0, 1, 1, 1, 1}), 0.0, 1e-15);
  const std::vector<int> a{0, 0, 1, 1}, b{0, 1, 0, 1};
  EXPECT_NEAR(ami(a, b), oracle::ami_permutations(a, b), 1e-10);
  EXPECT_LT(ami(a, b), 0.0);  // worse than chance is reported as negative
  EXPECT_DOUBLE_EQ(ami({2, 2, 2}, {4, 4, 4}), 1.0);
}

// Every pair of set partitions of n <= 8 items into at most 3 blocks.
TEST(MetricOracles, ExhaustiveSmallLabelings) {
  std::map<std::pair<std::vector<int>, std::vector<int>>, double> emi_cache;
  double worst_ari = 0.0, worst_ami = 0.0;
  long checked = 0;
  for (int n = 2; n <= 8; ++n) {
    const auto parts = oracle::set_partitions(n, 3);
    for (const auto& a : parts)
      for (const auto& b : parts) {
        worst_ari = std::max(worst_ari, std::abs(ari(a, b) - oracle::ari_pairs(a, b)));
        const auto key = std::make_pair(sizes_of(a), sizes_of(b));
        auto it = emi_cache.find(key);
        if (it == emi_cache.end())
          it = emi_cache
                   .emplace(key, oracle::expected_mi_permutations(labels_from_sizes(key.first),
                                                                  labels_from_sizes(key.second)))
                   .first;
        const double emi = it->second;
        const double denom = 0.5 * (oracle::entropy(a) + oracle::entropy(b)) - emi;
        const double expected = std::abs(denom) < 1e-15 ? 1.0 : (oracle::mutual_info(a, b) - emi) / denom;
        worst_ami = std::max(worst_ami, std::abs(ami(a, b) - expected));
        ++checked;
      }
  }
  EXPECT_GT(checked, 1000000);
  EXPECT_LE(worst_ari, 1e-10);
  EXPECT_LE(worst_ami, 1e-10);
}

TEST(MetricProperties, SymmetryAndRelabeling) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 5 + static_cast<int>(rng.index(40));
    std::vector<int> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
    for (auto& x : a) x = static_cast<int>(rng.index(4));
    for (auto& x : b) x = static_cast<int>(rng.index(3));
    std::vector<int> perm{7, 3, 9, 1};
    std::vector<int> a2(a);
    for (auto& x : a2) x = perm[static_cast<std::size_t>(x)];
    EXPECT_NEAR(ari(a, b), ari(b, a), 1e-12);
    EXPECT_NEAR(ami(a, b), ami(b, a), 1e-12);
    EXPECT_NEAR(ari(a, b), ari(a2, b), 1e-12);
    EXPECT_NEAR(ami(a, b), ami(a2, b), 1e-12);
  }
}

TEST(MetricProperties, IndependentLabelingsNearZero) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::vector<int> a(2000), b(2000);
    for (auto& x : a) x = static_cast<int>(rng.index(10));
    for (auto& x : b) x = static_cast<int>(rng.index(10));
    EXPECT_LE(std::abs(ari(a, b)), 0.02) << "seed " << seed;
  }
}

TEST(Ami, Normalizations) {
  const std::vector<int> a{0, 0, 1, 1, 2, 2, 2}, b{0, 0, 0, 1, 1, 2, 2};
  const double arith = ami(a, b, AmiNormalization::kArithmetic);
  const double maxn = ami(a, b, AmiNormalization::kMax);
  const double minn = ami(a, b, AmiNormalization::kMin);
  const double geo = ami(a, b, AmiNormalization::kGeometric);
  // Larger normalizer, smaller magnitude.
  EXPECT_LE(std::abs(maxn), std::abs(arith) + 1e-15);
  EXPECT_LE(std::abs(arith), std::abs(minn) + 1e-15);
  EXPECT_LE(std::abs(geo), std::abs(minn) + 1e-15);
}

TEST(Kmeans, SingleClusterIsMean) {
  Rng rng(1);
  const MatrixXd pts = rng.normal_matrix(50, 3);
  Rng kr(2);
  const Clustering c = kmeans(pts, 1, 3, 100, kr);
  const Eigen::RowVectorXd mean = pts.colwise().mean();
  EXPECT_LE((c.centroids.row(0) - mean).cwiseAbs().maxCoeff(), 1e-12);
  const double total = (pts.rowwise() - mean).squaredNorm();
  EXPECT_NEAR(c.inertia, total, 1e-9 * total);
}

TEST(Kmeans, DuplicatedGroupsHaveZeroInertia) {
  MatrixXd pts(6, 2);
  pts << 0, 0, 0, 0, 0, 0, 5, 5, 5, 5, 5, 5;
  Rng rng(3);
  const Clustering c = kmeans(pts, 2, 5, 100, rng);
  EXPECT_DOUBLE_EQ(c.inertia, 0.0);
  EXPECT_DOUBLE_EQ(ari({0, 0, 0, 1, 1, 1}, c.assignments), 1.0);
}

TEST(Kmeans, SixPointExampleMatchesExhaustiveOptimum) {
  MatrixXd pts(6, 1);
  pts << 0, 0.1, 0.2, 10, 10.1, 10.2;
  // Exhaustive oracle over all 2-partitions.
  double best = std::numeric_limits<double>::infinity();
  for (int mask = 1; mask < 63; ++mask) {
    double s[2] = {0, 0}, ss[2] = {0, 0};
    int cnt[2] = {0, 0};
    for (int i = 0; i < 6; ++i) {
      const int g = (mask >> i) & 1;
      s[g] += pts(i, 0);
      ss[g] += pts(i, 0) * pts(i, 0);
      ++cnt[g];
    }
    double inertia = 0;
    for (int g = 0; g < 2; ++g) inertia += ss[g] - s[g] * s[g] / cnt[g];
    best = std::min(best, inertia);
  }
  EXPECT_NEAR(best, 0.04, 1e-12);
  Rng rng(4);
  const Clustering c = kmeans(pts, 2, 20, 300, rng);
  EXPECT_NEAR(c.inertia, best, 1e-12);
  EXPECT_DOUBLE_EQ(ari({0, 0, 0, 1, 1, 1}, c.assignments), 1.0);
}

TEST(Kmeans, DeterministicUnderSeedAndValidLabels) {
  Rng data(5);
  const MatrixXd pts = data.normal_matrix(300, 4);
  Rng r1(9), r2(9);
  const Clustering a = kmeans(pts, 4, 3, 300, r1);
  const Clustering b = kmeans(pts, 4, 3, 300, r2);
  EXPECT_EQ(a.assignments, b.assignments);
  EXPECT_EQ(a.inertia, b.inertia);
  for (int l : a.assignments) {
    EXPECT_GE(l, 0);
    EXPECT_LT(l, 4);
  }
  EXPECT_GE(a.inertia, 0.0);
}

TEST(Kmeans, EmptyClusterIsReseeded) {
  // Three identical points force an empty cluster with k = 2 after the first
  // assignment; the result must still use both labels when possible.
  MatrixXd pts(4, 1);
  pts << 0, 0, 0, 1;
  Rng rng(6);
  const Clustering c = kmeans(pts, 2, 1, 50, rng);
  EXPECT_NEAR(c.inertia, 0.0, 1e-15);
  EXPECT_THROW(kmeans(pts, 5, 1, 10, rng), InvalidArgument);
  EXPECT_THROW(kmeans(pts, 2, 0, 10, rng), InvalidArgument);
}

TEST(EvaluateProjection, WellSeparatedFisherBasis) {
  // Spherical mixture with pairwise mean distance >= 20.
  MatrixXd means = MatrixXd::Zero(5, 3);
  means(0, 0) = 20;
  means(1, 1) = 20;
  means(2, 2) = -20;
  Rng rng(7);
  const int n = 600;
  MatrixXd pts(n, 5);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    labels[static_cast<std::size_t>(i)] = i % 3;
    pts.row(i) = (means.col(i % 3) + rng.normal_vector(5)).transpose();
  }
  const MatrixXd basis = oracle::gram_schmidt(means);
  Rng kr(8);
  const ClusterScores s = evaluate_projection(basis, pts, labels, 3, 10, kr);
  EXPECT_GE(s.ari, 0.99);
  EXPECT_GE(s.ami, 0.99);
  EXPECT_THROW(evaluate_projection(MatrixXd(5, 0), pts, labels, 3, 10, kr), InvalidArgument);
  EXPECT_THROW(evaluate_projection(MatrixXd::Identity(4, 4), pts, labels, 3, 10, kr), InvalidArgument);
}
