#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "helpers.hpp"
#include "oracles.hpp"
#include "shot/error.hpp"
#include "shot/metrics.hpp"

namespace shot {
namespace {

using testing::random_normal;

TEST(Accuracy, SpotValues) {
  const std::vector<int> labels{0, 1, 2, 1};
  EXPECT_EQ(accuracy(labels, labels), 1.0);
  const std::vector<int> p{0, 0}, y{0, 1};
  EXPECT_EQ(accuracy(p, y), 0.5);
  const auto per = per_class_accuracy(p, y, 3);
  EXPECT_EQ(per[0], 1.0);
  EXPECT_EQ(per[1], 0.0);
  EXPECT_FALSE(per[2].has_value());
  EXPECT_THROW(accuracy(p, labels), ShapeError);
}

TEST(Accuracy, PermutationInvariant) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> cls(0, 4);
  std::vector<int> p(60), y(60);
  for (auto& v : p) v = cls(rng);
  for (auto& v : y) v = cls(rng);
  std::vector<std::size_t> perm(60);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> pp(60), yp(60);
  for (std::size_t i = 0; i < 60; ++i) {
    pp[i] = p[perm[i]];
    yp[i] = y[perm[i]];
  }
  EXPECT_EQ(accuracy(p, y), accuracy(pp, yp));
  EXPECT_EQ(per_class_accuracy(p, y, 5), per_class_accuracy(pp, yp, 5));
}

TEST(OpenSet, SpotValues) {
  // K = 2 known classes, label 2 is unknown.
  const std::vector<int> y{0, 0, 1, 1, 2, 2};
  const std::vector<int> p{0, 0, 1, 0, 0, 1};
  const auto s = os_scores(p, y, 2);
  EXPECT_DOUBLE_EQ(s.os, 0.5);
  EXPECT_DOUBLE_EQ(s.os_star, 0.75);
  EXPECT_EQ(s.unknown_acc, 0.0);
  EXPECT_TRUE(s.all_classes_present);
}

TEST(OpenSet, PerfectPredictions) {
  const std::vector<int> y{0, 1, 2, 3, 3, 1};
  const auto s = os_scores(y, y, 3);
  EXPECT_EQ(s.os, 1.0);
  EXPECT_EQ(s.os_star, 1.0);
  EXPECT_EQ(s.unknown_acc, 1.0);
}

TEST(OpenSet, NoUnknownSamplesFlagged) {
  const std::vector<int> y{0, 1, 1};
  const std::vector<int> p{0, 1, 2};
  const auto s = os_scores(p, y, 2);
  EXPECT_FALSE(s.unknown_acc.has_value());
  EXPECT_FALSE(s.all_classes_present);
  EXPECT_DOUBLE_EQ(s.os_star, 0.75);
  EXPECT_DOUBLE_EQ(s.os, 0.75);
}

TEST(OpenSet, MatchesIndependentRecount) {
  std::mt19937_64 rng(2021);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + static_cast<std::size_t>(trial % 6);
    std::uniform_int_distribution<int> cls(0, static_cast<int>(k));
    std::vector<int> p(20 + static_cast<std::size_t>(trial)), y(p.size());
    for (auto& v : p) v = cls(rng);
    for (auto& v : y) v = cls(rng);
    y[0] = 0;  // at least one known sample
    const auto s = os_scores(p, y, k);
    const auto r = testing::recount_open_set(p, y, k);
    EXPECT_DOUBLE_EQ(s.os, r.os) << trial;
    EXPECT_DOUBLE_EQ(s.os_star, r.os_star) << trial;
    EXPECT_EQ(s.unknown_acc.has_value(), r.unknown.has_value());
    if (r.unknown) EXPECT_EQ(*s.unknown_acc, *r.unknown);
    // OS is the K-weighted mix of OS* and unknown accuracy when every class is present.
    if (s.all_classes_present) {
      EXPECT_NEAR(s.os, (static_cast<double>(k) * s.os_star + *s.unknown_acc) / static_cast<double>(k + 1), 1e-12);
    }
  }
}

TEST(Confusion, CountsEveryPair) {
  const std::vector<int> y{0, 1, 2, 2};
  const std::vector<int> p{0, 2, 2, 1};
  const auto c = confusion(p, y, 2);
  EXPECT_EQ(c.total(), 4u);
  EXPECT_EQ(c.at(1, 2), 1u);
  EXPECT_EQ(c.at(2, 1), 1u);
  EXPECT_EQ(c.at(2, 2), 1u);
}

TEST(Projection, AxisAlignedIsCenteredDataUpToSign) {
  const Tensor x = Tensor::matrix({{4, 1}, {0, 1}, {2, 2}, {2, 0}});
  const Tensor p = project_2d(x);
  const double mx = 2.0, my = 1.0;
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(std::abs(p(i, 0)), std::abs(x(i, 0) - mx), 1e-12);
    EXPECT_NEAR(std::abs(p(i, 1)), std::abs(x(i, 1) - my), 1e-12);
  }
}

TEST(Projection, RankOneHasFlatSecondAxis) {
  std::vector<double> v;
  for (int i = 0; i < 10; ++i) {
    const double t = i - 4.5;
    v.insert(v.end(), {t, 2 * t, -t});
  }
  const Tensor p = project_2d(Tensor({10, 3}, v));
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(p(i, 1), 0.0, 1e-9);
}

TEST(Projection, OneDimensionalInputPadded) {
  const Tensor p = project_2d(Tensor::matrix({{1}, {2}, {4}}));
  EXPECT_EQ(p.cols(), 2u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(p(i, 1), 0.0);
}

TEST(Projection, TranslationInvariant) {
  std::mt19937_64 rng(3);
  const Tensor x = random_normal(40, 5, rng);
  Tensor shifted = x;
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < 5; ++j) shifted(i, j) += 10.0 * static_cast<double>(j) - 3.0;
  const Tensor a = project_2d(x), b = project_2d(shifted);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-9);
}

TEST(Projection, BeatsRandomRankTwoProjections) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_normal(60, 6, rng);
    for (std::size_t i = 0; i < 60; ++i) x(i, 0) *= 3.0, x(i, 3) *= 2.0;
    // Residual of the principal plane: total centered energy minus projected energy.
    double total = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < 60; ++i) mean += x(i, j);
      mean /= 60.0;
      for (std::size_t i = 0; i < 60; ++i) total += (x(i, j) - mean) * (x(i, j) - mean);
    }
    double kept = 0.0;
    for (double v : project_2d(x).data()) kept += v * v;
    const double pca_residual = total - kept;
    for (int r = 0; r < 10; ++r) {
      // Gram-Schmidt on two random directions.
      Tensor basis = random_normal(2, 6, rng);
      auto normalise = [&](std::size_t row) {
        double n = 0.0;
        for (std::size_t j = 0; j < 6; ++j) n += basis(row, j) * basis(row, j);
        for (std::size_t j = 0; j < 6; ++j) basis(row, j) /= std::sqrt(n);
      };
      normalise(0);
      double dot = 0.0;
      for (std::size_t j = 0; j < 6; ++j) dot += basis(0, j) * basis(1, j);
      for (std::size_t j = 0; j < 6; ++j) basis(1, j) -= dot * basis(0, j);
      normalise(1);
      EXPECT_LE(pca_residual, reconstruction_error(x, basis) + 1e-9);
    }
  }
}

}  // namespace
}  // namespace shot
