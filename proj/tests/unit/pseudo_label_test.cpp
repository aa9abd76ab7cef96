#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "helpers.hpp"
#include "oracles.hpp"
#include "shot/autodiff.hpp"
#include "shot/error.hpp"
#include "shot/pseudo_label.hpp"

namespace shot {
namespace {

using testing::random_normal;
using testing::brute_force_assign;
using testing::random_tensor;

CentroidSet all_active(Tensor centroids) {
  const std::size_t k = centroids.rows();
  return {std::move(centroids), std::vector<double>(k, 1.0), std::vector<bool>(k, true)};
}

TEST(Cosine, SpotValues) {
  const std::vector<double> v{0.3, -1.2, 2.0};
  const std::vector<double> neg{-0.3, 1.2, -2.0};
  EXPECT_NEAR(cosine_distance(v, v), 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(cosine_distance(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 1.0);
  EXPECT_NEAR(cosine_distance(v, neg), 2.0, 1e-15);
  EXPECT_THROW(cosine_distance(v, std::vector<double>{0, 0, 0}), NumericError);
}

TEST(InitialCentroids, UniformWeightsGiveMean) {
  const auto c = initial_centroids(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{0.5, 0.5}, {0.5, 0.5}}));
  EXPECT_EQ(c.centroids, Tensor::matrix({{0.5, 0.5}, {0.5, 0.5}}));
  EXPECT_EQ(c.num_active(), 2u);
}

TEST(InitialCentroids, OneHotGivesClassMeansAndEmptyClassInactive) {
  const Tensor x = Tensor::matrix({{1, 2}, {3, 4}, {-1, 0}});
  const Tensor p = Tensor::matrix({{1, 0, 0}, {1, 0, 0}, {0, 1, 0}});
  const auto c = initial_centroids(x, p);
  EXPECT_EQ(c.centroids(0, 0), 2.0);
  EXPECT_EQ(c.centroids(0, 1), 3.0);
  EXPECT_EQ(c.centroids(1, 0), -1.0);
  EXPECT_FALSE(c.active[2]);
  EXPECT_EQ(c.mass, (std::vector<double>{2.0, 1.0, 0.0}));
}

TEST(InitialCentroids, NoSamplesRejected) {
  EXPECT_THROW(initial_centroids(Tensor(0, 2), Tensor(0, 3)), ShapeError);
}

TEST(Assign, NearerInAngle) {
  const auto cents = all_active(Tensor::matrix({{1, 0}, {0, 1}}));
  EXPECT_EQ(assign_labels(Tensor::matrix({{0.9, 0.1}}), cents).labels, std::vector<int>{0});
}

TEST(Assign, TieGoesToSmallerIndex) {
  const auto cents = all_active(Tensor::matrix({{0, 1}, {1, 0}, {2, 0}}));
  EXPECT_EQ(assign_labels(Tensor::matrix({{1, 1}, {3, 0}}), cents).labels, (std::vector<int>{0, 1}));
}

TEST(Assign, NoActiveCentroidsRejected) {
  CentroidSet cents = all_active(Tensor::matrix({{1, 0}}));
  cents.active[0] = false;
  EXPECT_THROW(assign_labels(Tensor::matrix({{1, 1}}), cents), ConfigError);
}

TEST(Assign, MatchesBruteForceOnRandomInstances) {
  std::mt19937_64 rng(2020);
  std::uniform_int_distribution<std::size_t> n_dist(1, 200), k_dist(2, 8), d_dist(1, 16);
  std::bernoulli_distribution keep(0.8);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = n_dist(rng), k = k_dist(rng), d = d_dist(rng);
    CentroidSet cents = all_active(random_normal(k, d, rng));
    for (std::size_t c = 0; c < k; ++c) cents.active[c] = keep(rng);
    cents.active[k_dist(rng) % k] = true;
    const Tensor x = random_normal(n, d, rng);
    ASSERT_EQ(assign_labels(x, cents).labels, brute_force_assign(x, cents)) << "trial " << trial;
  }
}

TEST(Assign, PermutationEquivariant) {
  std::mt19937_64 rng(5);
  const Tensor x = random_normal(50, 4, rng);
  const Tensor p = softmax_rows(random_normal(50, 3, rng, 2.0));
  std::vector<std::size_t> perm(50);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor xp(50, 4), pp(50, 3);
  for (std::size_t i = 0; i < 50; ++i) {
    for (std::size_t j = 0; j < 4; ++j) xp(i, j) = x(perm[i], j);
    for (std::size_t j = 0; j < 3; ++j) pp(i, j) = p(perm[i], j);
  }
  const auto a = assign_labels(x, initial_centroids(x, p)).labels;
  const auto b = assign_labels(xp, initial_centroids(xp, pp)).labels;
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(b[i], a[perm[i]]);
}

// Six points, two classes. x4 starts in class 1; the class means are
// c0 = (1, 0.05) and c1 = (0.325, 0.875), and cosine distances from x4 = (1, 0.5)
// are 0.08436 to c0 and 0.26934 to c1, so x4 moves to class 0.
TEST(Refine, HandComputedSixPointStep) {
  const Tensor x = Tensor::matrix({{1, 0}, {1, 0.1}, {0, 1}, {0.1, 1}, {1, 0.5}, {0.2, 1}});
  const PseudoLabels start{{0, 0, 1, 1, 1, 1}, 0};
  const auto r = refine(x, start, 1, 2);
  EXPECT_EQ(r.labels.labels, (std::vector<int>{0, 0, 1, 1, 0, 1}));
  EXPECT_EQ(r.labels.round, 1);
  EXPECT_NEAR(r.centroids.centroids(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(r.centroids.centroids(0, 1), 0.05, 1e-15);
  EXPECT_NEAR(r.centroids.centroids(1, 0), 0.325, 1e-15);
  EXPECT_NEAR(r.centroids.centroids(1, 1), 0.875, 1e-15);
  EXPECT_EQ(r.centroids.mass, (std::vector<double>{2.0, 4.0}));
  EXPECT_NEAR(cosine_distance(x.row(4), r.centroids.centroids.row(0)), 0.08436, 1e-5);
  EXPECT_NEAR(cosine_distance(x.row(4), r.centroids.centroids.row(1)), 0.26934, 1e-5);
}

TEST(Refine, ConvergedAssignmentIsFixedPoint) {
  const Tensor x = Tensor::matrix({{1, 0}, {1, 0.1}, {0, 1}, {0.1, 1}, {1, 0.5}, {0.2, 1}});
  const PseudoLabels converged{{0, 0, 1, 1, 0, 1}, 0};
  EXPECT_EQ(refine(x, converged, 3, 2).labels.labels, converged.labels);
}

TEST(Refine, EmptiedClassBecomesInactive) {
  // Class 2 owns one point that sits closer to class 0's mean once means are recomputed.
  const Tensor x = Tensor::matrix({{1, 0}, {1, 0.2}, {0, 1}, {0.1, 1}, {1, 0.05}});
  const PseudoLabels start{{0, 0, 1, 1, 2}, 0};
  const auto one = refine(x, start, 1, 3);
  EXPECT_TRUE(one.centroids.active[2]);
  const auto two = refine(x, one.labels, 1, 3);
  const auto counts = label_counts(one.labels, 3);
  if (counts[2] == 0) EXPECT_FALSE(two.centroids.active[2]);
  EXPECT_THROW(refine(x, start, 0, 3), ConfigError);
}

TEST(Refine, RejectedRowsStayRejected) {
  const Tensor x = Tensor::matrix({{1, 0}, {1, 0.1}, {0, 1}, {0.1, 1}});
  const auto r = refine(x, PseudoLabels{{0, kRejected, 1, 1}, 0}, 2, 2);
  EXPECT_EQ(r.labels.labels[1], kRejected);
  EXPECT_EQ(r.centroids.mass[0], 1.0);
}

TEST(Prune, ZeroIsNoOp) {
  const CentroidSet c = all_active(Tensor::matrix({{1, 0}, {0, 1}}));
  const std::vector<std::size_t> counts{0, 3};
  const auto p = prune_centroids(c, counts, 0);
  EXPECT_EQ(p.active, c.active);
}

TEST(Prune, TinyCentroidsDroppedAndPointsReassigned) {
  // 93 points around four directions with counts 50, 40, 2, 1.
  std::mt19937_64 rng(9);
  std::normal_distribution<double> noise(0.0, 0.05);
  const std::vector<std::array<double, 2>> dirs{{1, 0}, {0, 1}, {-1, 0.2}, {0.3, -1}};
  const std::vector<std::size_t> sizes{50, 40, 2, 1};
  std::vector<double> values;
  for (std::size_t c = 0; c < 4; ++c) {
    for (std::size_t i = 0; i < sizes[c]; ++i) {
      values.push_back(dirs[c][0] + noise(rng));
      values.push_back(dirs[c][1] + noise(rng));
    }
  }
  const Tensor x({93, 2}, values);
  CentroidSet cents = all_active(Tensor::matrix({{1, 0}, {0, 1}, {-1, 0.2}, {0.3, -1}}));
  const auto labels = assign_labels(x, cents);
  const auto counts = label_counts(labels, 4);
  ASSERT_EQ(counts, sizes);
  const auto pruned = prune_centroids(cents, counts, 5);
  EXPECT_EQ(pruned.active, (std::vector<bool>{true, true, false, false}));
  const auto relabelled = assign_labels(x, pruned);
  for (int y : relabelled.labels) EXPECT_TRUE(y == 0 || y == 1);
  EXPECT_EQ(relabelled.labels, brute_force_assign(x, pruned));
  EXPECT_THROW(prune_centroids(cents, counts, 100), ConfigError);
}

TEST(Generate, ComposesInitialAssignRefine) {
  const Model m = build_model({2, {16}, 8, 3}, 4);
  std::mt19937_64 rng(8);
  const Tensor x = random_tensor(60, 2, rng, -3, 3);
  const auto g = generate(m, x, PseudoLabelConfig{});
  const auto out = predict(m, x);
  const auto cents = initial_centroids(out.features, softmax_rows(out.logits));
  const auto first = assign_labels(out.features, cents);
  const auto r = refine(out.features, first, 1, 3, cents.active);
  EXPECT_EQ(g.labels.labels, r.labels.labels);
  EXPECT_EQ(g.labels.round, 1);
  EXPECT_EQ(generate(m, x, PseudoLabelConfig{}).labels.labels, g.labels.labels);
}

TEST(Generate, RejectedRowsCarrySentinel) {
  const Model m = build_model({2, {16}, 8, 3}, 4);
  std::mt19937_64 rng(8);
  const Tensor x = random_tensor(20, 2, rng, -3, 3);
  std::vector<bool> rejected(20, false);
  rejected[3] = rejected[7] = true;
  const auto g = generate(m, x, PseudoLabelConfig{}, rejected);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(g.labels.labels[i] == kRejected, rejected[i]) << i;
}

}  // namespace
}  // namespace shot
