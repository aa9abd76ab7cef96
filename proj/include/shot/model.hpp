#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "shot/autodiff.hpp"
#include "shot/optim.hpp"
#include "shot/tensor.hpp"

namespace shot {

enum class Mode { Train, Eval };

struct ModelDims {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden{64};
  std::size_t bottleneck = 16;
  std::size_t num_classes = 4;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// Architecture toggles. Turning batch_norm or weight_norm off gives the
// ablation variants; defaults are the full architecture.
struct ArchOptions {
  bool batch_norm = true;
  bool weight_norm = true;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;

  friend bool operator==(const ArchOptions&, const ArchOptions&) = default;
};

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;

  friend bool operator==(const BatchNormState&, const BatchNormState&) = default;
};

// f = h(g(x)). The encoder g is a ReLU dense stack followed by a bottleneck
// dense layer and batch norm; the classifier h is a bias-free linear layer
// whose rows are s_k * v_k / |v_k| when weight_norm is on.
struct Model {
  ModelDims dims;
  ArchOptions arch;
  ParamSet encoder;
  ParamSet classifier;
  BatchNormState bn;
  bool classifier_frozen = false;

  // Learnable scalars (encoder + classifier).
  std::size_t parameter_count() const;
  // Learnable scalars plus batch-norm running statistics.
  std::size_t state_count() const;

  friend bool operator==(const Model&, const Model&) = default;
};

namespace param_names {
inline constexpr const char* kBottleneckWeight = "enc.bottleneck.w";
inline constexpr const char* kBottleneckBias = "enc.bottleneck.b";
inline constexpr const char* kBnGamma = "enc.bn.gamma";
inline constexpr const char* kBnBeta = "enc.bn.beta";
inline constexpr const char* kClsDirection = "cls.v";
inline constexpr const char* kClsScale = "cls.s";
inline constexpr const char* kClsWeight = "cls.w";
// Hidden dense layers are "enc.fc<i>.w" / "enc.fc<i>.b".
inline constexpr const char* kHiddenPrefix = "enc.fc";
}  // namespace param_names

Model build_model(const ModelDims& dims, std::uint64_t seed, const ArchOptions& arch = {});

struct ForwardResult {
  Var features;  // n x bottleneck
  Var logits;    // n x K
};

// Records the forward pass on `tape`. Train mode uses batch statistics and
// updates the running statistics; it needs at least two rows.
ForwardResult forward(Model& model, Tape& tape, const Tensor& batch, Mode mode);
// Eval-mode forward; never mutates the model.
ForwardResult forward_eval(const Model& model, Tape& tape, const Tensor& batch);

struct Outputs {
  Tensor features;
  Tensor logits;
};
Outputs predict(const Model& model, const Tensor& batch);

// K x d matrix of effective classifier rows.
Tensor effective_classifier_weight(const Model& model);

Model freeze_classifier(Model model);
// Copy of `src` for target training: independent storage, fresh momentum.
Model clone_encoder(const Model& src);

// Recomputes running statistics from `data` in a single pass (cumulative average).
void reestimate_batch_norm(Model& model, const Tensor& data);

inline constexpr const char* kModelFormat = "shot-model/1";

std::string model_to_json(const Model& model);
Model model_from_json(const std::string& text);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace shot
