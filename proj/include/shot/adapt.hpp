#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "shot/data.hpp"
#include "shot/losses.hpp"
#include "shot/model.hpp"
#include "shot/optim.hpp"
#include "shot/pseudo_label.hpp"

namespace shot {

enum class Scenario { Closed, Partial, Open };
enum class PseudoLabelMode { SelfSupervised, Naive, None };

std::string to_string(Scenario s);
Scenario parse_scenario(const std::string& s);
std::string to_string(PseudoLabelMode m);
PseudoLabelMode parse_pseudo_label_mode(const std::string& s);

struct AdaptConfig {
  double alpha = 0.1;  // source label smoothing
  double beta = 0.3;
  SgdConfig sgd;
  std::size_t batch_size = 64;
  std::size_t source_epochs = 30;
  std::size_t adapt_epochs = 15;
  int refinement_rounds = 1;
  Scenario scenario = Scenario::Closed;
  std::size_t tc = 0;          // minimum centroid size (partial set)
  double tc_fraction = 0.0;    // alternative: fraction of n / K
  std::uint64_t seed = 2019;
  std::optional<bool> include_div;  // unset: every scenario except partial
  // During adaptation the hidden dense layers train at eta / this factor;
  // bottleneck and batch norm train at eta.
  double new_layer_lr_multiplier = 10.0;
  PseudoLabelMode pseudo_labels = PseudoLabelMode::SelfSupervised;
  double val_fraction = 0.1;
  bool reestimate_bn = false;
  // Normalise with the running statistics during adaptation instead of batch
  // statistics; batch-norm scale and shift still train. Unset: partial only,
  // where the target's missing classes skew every batch mean.
  std::optional<bool> freeze_bn_stats;
  // Open set: whether rejected samples are also removed from L_div and L_pl
  // (they are always removed from L_ent and the centroids).
  bool reject_from_div = true;
  bool reject_from_pl = true;

  bool effective_include_div() const { return include_div.value_or(scenario != Scenario::Partial); }
  bool effective_freeze_bn_stats() const { return freeze_bn_stats.value_or(scenario == Scenario::Partial); }
};

// Throws ConfigError on out-of-range fields.
void validate(const AdaptConfig& cfg);

struct SourceEpoch {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double val_loss = 0.0;
};

struct SourceResult {
  Model model;               // best validation accuracy, ties to the lower validation loss
  double best_val_acc = 0.0;
  std::size_t best_epoch = 0;
  std::vector<SourceEpoch> history;
};

// Smoothed cross-entropy training on a 0.9/0.1 train/validation split.
SourceResult train_source(const Model& init, const Dataset& source, const AdaptConfig& cfg);

struct RejectionMask {
  std::vector<bool> rejected;
  std::vector<double> uncertainties;  // entropy / log K, in [0, 1]
  std::array<double, 2> cluster_means{0.0, 0.0};

  double rejection_rate() const;
};

// Normalised prediction entropy split by 1-D 2-means; the cluster with the
// larger mean is rejected. Identical uncertainties reject nothing.
RejectionMask reject_unknown(const Tensor& logits);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double ent = 0.0;
  double div = 0.0;
  double pl = 0.0;
  std::optional<double> train_acc;
  std::optional<double> pseudo_label_agreement;
  std::optional<double> pseudo_label_acc;
  std::optional<double> rejection_rate;
};

nlohmann::json to_json(const EpochLog& e);
void write_epoch_log(const std::filesystem::path& path, std::span<const EpochLog> history);

struct AdaptResult {
  Model model;
  std::vector<EpochLog> history;
  std::optional<RejectionMask> rejection;  // open set: mask on the final model
};

// Optional ground truth used only for the per-epoch log; never for training.
struct AdaptMonitor {
  const std::vector<int>* labels = nullptr;
  std::filesystem::path pseudo_label_dump_dir;  // empty = no dump
};

// One target-side training run dispatched on cfg.scenario and cfg.pseudo_labels.
AdaptResult adapt(const Model& source_model, const Tensor& target, const AdaptConfig& cfg,
                  const AdaptMonitor& monitor = {});

// Scenario-specific entry points; each checks cfg.scenario.
AdaptResult adapt_shot(const Model& source_model, const Tensor& target, const AdaptConfig& cfg,
                       const AdaptMonitor& monitor = {});
AdaptResult adapt_partial(const Model& source_model, const Tensor& target, const AdaptConfig& cfg,
                          const AdaptMonitor& monitor = {});
AdaptResult adapt_open(const Model& source_model, const Tensor& target, const AdaptConfig& cfg,
                       const AdaptMonitor& monitor = {});
AdaptResult adapt_naive_pl(const Model& source_model, const Tensor& target, const AdaptConfig& cfg,
                           const AdaptMonitor& monitor = {});

// Argmax predictions; rows flagged in `rejected` get label K.
std::vector<int> predict_labels(const Model& model, const Tensor& data, const std::vector<bool>& rejected = {});

// Sum of per-model softmax scores, then argmax (ties to the smaller id).
std::vector<int> multi_source_predict(std::span<const Model> models, const Tensor& data);

// Concatenation keeping per-sample domain tags.
Dataset multi_target_pool(std::span<const Dataset> targets);

}  // namespace shot
