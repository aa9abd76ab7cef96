#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "shot/autodiff.hpp"
#include "shot/tensor.hpp"

namespace shot {

struct Param {
  Tensor value;
  Tensor momentum;  // same shape as value
  bool trainable = true;

  friend bool operator==(const Param&, const Param&) = default;
};

// Named parameters with their momentum buffers. Iteration is in name order.
class ParamSet {
 public:
  using Map = std::map<std::string, Param>;

  void add(const std::string& name, Tensor value, bool trainable = true);
  bool contains(const std::string& name) const { return params_.contains(name); }
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  Tensor& value(const std::string& name) { return at(name).value; }
  const Tensor& value(const std::string& name) const { return at(name).value; }

  void set_trainable(bool trainable);
  void reset_momentum();

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  // Registers every parameter on the tape (frozen ones as non-trainable leaves).
  std::map<std::string, Var> bind(Tape& tape) const;

  Map::iterator begin() { return params_.begin(); }
  Map::iterator end() { return params_.end(); }
  Map::const_iterator begin() const { return params_.begin(); }
  Map::const_iterator end() const { return params_.end(); }

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  Map params_;
};

struct SgdConfig {
  double eta0 = 1e-2;
  double momentum = 0.9;
  double weight_decay = 1e-3;
};

// Parameters whose name starts with `prefix` use lr * multiplier. First match wins.
struct LrGroup {
  std::string prefix;
  double multiplier = 1.0;
};

// Classical momentum with weight decay folded into the gradient:
//   v <- momentum * v + grad + weight_decay * param;  param <- param - lr * v
// Frozen parameters are left untouched. Gradients for names outside `params`
// are ignored, but every trainable parameter must have one.
void sgd_step(ParamSet& params, const GradMap& grads, double lr, const SgdConfig& cfg,
              std::span<const LrGroup> groups = {});

// eta0 * (1 + 10 p)^-0.75 for training progress p in [0, 1].
double lr_schedule(double eta0, double progress);

// Builds the scalar loss on a fresh tape from the given parameters.
using TapeLoss = std::function<Var(Tape&, const ParamSet&)>;

// Max over trainable scalar parameters of
//   |analytic - central difference| / max(|analytic|, |fd|, 1e-12).
double finite_diff_check(const TapeLoss& loss, const ParamSet& params, double eps);

}  // namespace shot
