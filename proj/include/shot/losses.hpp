#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "shot/autodiff.hpp"
#include "shot/tensor.hpp"

namespace shot {

// Pseudo-label value for samples that are excluded from the loss.
inline constexpr int kRejected = -1;

struct SmoothingConfig {
  double alpha = 0.1;
};

// (1 - alpha) * onehot(label) + alpha / K.
std::vector<double> smoothed_target(int label, std::size_t num_classes, double alpha);

// Batch mean of -sum_k q_k log softmax_k(logits) with smoothed targets q.
// alpha = 0 is plain cross-entropy.
Var smoothed_cross_entropy(Var logits, std::span<const int> labels, double alpha);

// `include` selects the samples that enter a term; an empty mask keeps all.
// A term with no included samples evaluates to 0.

// Mean over included rows of -sum_k p_k log p_k.
Var entropy_loss(Var logits, const std::vector<bool>& include = {});

// sum_k pbar_k log pbar_k, pbar the mean softmax over included rows.
Var diversity_loss(Var logits, const std::vector<bool>& include = {});

// Same value computed as KL(pbar || uniform) - log K; forward only.
double diversity_loss_kl_form(const Tensor& logits);

// Mean of -log softmax_{y_i} over rows with y_i != kRejected.
Var pseudo_label_ce(Var logits, std::span<const int> pseudo_labels);

struct LossValue {
  double value = 0.0;
  std::map<std::string, double> components;  // "ent", "div", "pl"
};

struct ShotLoss {
  Var total;
  LossValue value;
};

struct ShotLossOptions {
  double beta = 0.3;
  bool include_div = true;
  // Which terms honour the sample mask (open-set rejection).
  bool mask_ent = true;
  bool mask_div = true;
  bool mask_pl = true;
};

// L_ent + [include_div] L_div + beta * L_pl. `mask` marks rows to keep (empty = all).
ShotLoss shot_objective(Var logits, std::span<const int> pseudo_labels, const ShotLossOptions& opts,
                        const std::vector<bool>& mask = {});

}  // namespace shot
