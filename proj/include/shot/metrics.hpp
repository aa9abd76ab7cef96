#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "shot/tensor.hpp"

namespace shot {

double accuracy(std::span<const int> preds, std::span<const int> labels);

// Acc_k = correct_k / count_k; nullopt for classes with no samples.
std::vector<std::optional<double>> per_class_accuracy(std::span<const int> preds, std::span<const int> labels,
                                                      std::size_t num_classes);

// (K+1) x (K+1) counts indexed [true][predicted]; index K is the unknown class.
struct ConfusionCounts {
  std::size_t num_known = 0;
  std::vector<std::size_t> counts;

  std::size_t at(std::size_t truth, std::size_t pred) const { return counts[truth * (num_known + 1) + pred]; }
  std::size_t total() const;
};

ConfusionCounts confusion(std::span<const int> preds, std::span<const int> labels, std::size_t num_known);

struct OpenSetScores {
  double os = 0.0;       // mean per-class accuracy over known classes and unknown
  double os_star = 0.0;  // mean over known classes only
  std::optional<double> unknown_acc;
  bool all_classes_present = true;  // false: averages skip classes with no samples
};

// Labels and predictions use num_known as the unknown class.
OpenSetScores os_scores(std::span<const int> preds, std::span<const int> labels, std::size_t num_known);

// Centered data projected on the top two principal directions. Each direction
// is signed so its first nonzero component is positive. d < 2 pads with zeros.
Tensor project_2d(const Tensor& features);

// Sum of squared residuals when projecting centered data onto the row space of
// `basis` (k x d, orthonormal rows).
double reconstruction_error(const Tensor& features, const Tensor& basis);

}  // namespace shot
