#pragma once

// Independent reference implementations used to check the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "shot/pseudo_label.hpp"
#include "shot/tensor.hpp"

namespace shot::testing {

// Exhaustive nearest active centroid under cosine distance, first minimum wins.
inline std::vector<int> brute_force_assign(const Tensor& x, const CentroidSet& cents) {
  std::vector<int> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cents.num_classes(); ++c) {
      if (!cents.active[c]) continue;
      double dot = 0.0, nx = 0.0, nc = 0.0;
      for (std::size_t j = 0; j < x.cols(); ++j) {
        dot += x(i, j) * cents.centroids(c, j);
        nx += x(i, j) * x(i, j);
        nc += cents.centroids(c, j) * cents.centroids(c, j);
      }
      const double dist = 1.0 - dot / (std::sqrt(nx) * std::sqrt(nc));
      if (dist < best) {
        best = dist;
        out[i] = static_cast<int>(c);
      }
    }
  }
  return out;
}

// Within-cluster sum of squares of a two-way split.
inline double split_sse(const std::vector<double>& u, const std::vector<bool>& high) {
  double s[2] = {0, 0}, c[2] = {0, 0};
  for (std::size_t i = 0; i < u.size(); ++i) s[high[i]] += u[i], c[high[i]] += 1;
  double out = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double m = s[high[i]] / c[high[i]];
    out += (u[i] - m) * (u[i] - m);
  }
  return out;
}

// Optimal 1-D two-cluster split by trying every threshold; true marks the upper cluster.
inline std::vector<bool> brute_force_threshold(const std::vector<double>& u) {
  std::vector<double> sorted(u);
  std::sort(sorted.begin(), sorted.end());
  double best = std::numeric_limits<double>::infinity();
  std::vector<bool> best_mask(u.size(), false);
  for (std::size_t s = 1; s < sorted.size(); ++s) {
    if (sorted[s] == sorted[s - 1]) continue;
    std::vector<bool> high(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) high[i] = u[i] >= sorted[s];
    const double e = split_sse(u, high);
    if (e < best) best = e, best_mask = high;
  }
  return best_mask;
}

struct OpenSetRecount {
  double os = 0.0;
  double os_star = 0.0;
  std::optional<double> unknown;
};

// Per-class accuracies recounted from raw (prediction, label) pairs; label k is unknown.
inline OpenSetRecount recount_open_set(const std::vector<int>& p, const std::vector<int>& y, std::size_t k) {
  std::vector<double> acc;
  OpenSetRecount r;
  double known_sum = 0.0;
  std::size_t known_present = 0;
  for (std::size_t c = 0; c <= k; ++c) {
    std::size_t total = 0, hit = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] != static_cast<int>(c)) continue;
      ++total;
      hit += p[i] == y[i];
    }
    if (total == 0) continue;
    const double a = static_cast<double>(hit) / static_cast<double>(total);
    acc.push_back(a);
    if (c < k) {
      known_sum += a;
      ++known_present;
    } else {
      r.unknown = a;
    }
  }
  r.os_star = known_sum / static_cast<double>(known_present);
  r.os = std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
  return r;
}

}  // namespace shot::testing
