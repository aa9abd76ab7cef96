#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "shot/model.hpp"
#include "shot/tensor.hpp"

namespace shot {

// Soft mass below this marks a class centroid empty.
inline constexpr double kMassEpsilon = 1e-8;

struct CentroidSet {
  Tensor centroids;           // K x d
  std::vector<double> mass;   // soft or hard counts
  std::vector<bool> active;   // only active centroids take part in assignment

  std::size_t num_classes() const { return mass.size(); }
  std::size_t num_active() const;
};

struct PseudoLabels {
  std::vector<int> labels;  // class id, or kRejected
  int round = 0;            // 0 after the initial assignment, r after r refinements
};

// 1 - a.b / (|a| |b|); throws on a zero vector.
double cosine_distance(std::span<const double> a, std::span<const double> b);

// Soft-weighted class means: c_k = sum_i p_ik x_i / sum_i p_ik over included rows.
CentroidSet initial_centroids(const Tensor& features, const Tensor& soft_outputs,
                              const std::vector<bool>& include = {});

// Nearest active centroid under cosine distance, ties to the smaller class id.
// Rows outside `include` get kRejected.
PseudoLabels assign_labels(const Tensor& features, const CentroidSet& cents, const std::vector<bool>& include = {});

struct Refinement {
  CentroidSet centroids;
  PseudoLabels labels;
};

// `rounds` passes of hard-mean centroid update followed by reassignment.
// Classes outside `allowed` (empty = all) never become active.
Refinement refine(const Tensor& features, const PseudoLabels& labels, int rounds, std::size_t num_classes,
                  const std::vector<bool>& allowed = {});

std::vector<std::size_t> label_counts(const PseudoLabels& labels, std::size_t num_classes);

// Deactivates classes whose hard count is below min_count.
CentroidSet prune_centroids(CentroidSet cents, std::span<const std::size_t> counts, std::size_t min_count);

struct PseudoLabelConfig {
  int rounds = 1;
  // Minimum centroid size; 0 disables pruning.
  std::size_t min_count = 0;
  // When > 0, min_count = round(fraction * n / K) instead.
  double min_count_fraction = 0.0;
};

struct PseudoLabelResult {
  PseudoLabels labels;
  CentroidSet centroids;
};

// Full-dataset eval-mode pass, soft centroids, nearest-centroid labels,
// optional pruning, then refinement. Rows flagged in `rejected` are excluded
// from the centroid statistics and labelled kRejected.
PseudoLabelResult generate(const Model& model, const Tensor& target, const PseudoLabelConfig& cfg,
                           const std::vector<bool>& rejected = {});

// Argmax of the model's own predictions (no centroids).
PseudoLabels argmax_labels(const Model& model, const Tensor& target, const std::vector<bool>& rejected = {});

// Appends one epoch of diagnostics: centroids as (epoch,class,mass,active,c0..)
// and labels as (epoch,sample,label). Headers are written for new files.
void dump_pseudo_labels(const std::filesystem::path& centroid_csv, const std::filesystem::path& label_csv, int epoch,
                        const PseudoLabelResult& result);

}  // namespace shot
