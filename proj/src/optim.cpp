#include "shot/optim.hpp"

#include <algorithm>
#include <cmath>

#include "shot/error.hpp"

namespace shot {

void ParamSet::add(const std::string& name, Tensor value, bool trainable) {
  if (params_.contains(name)) throw ConfigError("ParamSet: duplicate parameter '" + name + "'");
  Tensor mom = Tensor::zeros_like(value);
  params_.emplace(name, Param{std::move(value), std::move(mom), trainable});
}

Param& ParamSet::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("ParamSet: no parameter '" + name + "'");
  return it->second;
}

const Param& ParamSet::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("ParamSet: no parameter '" + name + "'");
  return it->second;
}

void ParamSet::set_trainable(bool trainable) {
  for (auto& [_, p] : params_) p.trainable = trainable;
}

void ParamSet::reset_momentum() {
  for (auto& [_, p] : params_) p.momentum = Tensor::zeros_like(p.value);
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.size();
  return n;
}

std::map<std::string, Var> ParamSet::bind(Tape& tape) const {
  std::map<std::string, Var> out;
  for (const auto& [name, p] : params_) out.emplace(name, tape.parameter(name, p.value, p.trainable));
  return out;
}

void sgd_step(ParamSet& params, const GradMap& grads, double lr, const SgdConfig& cfg,
              std::span<const LrGroup> groups) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("sgd_step: learning rate must be >= 0");
  for (auto& [name, p] : params) {
    if (!p.trainable) continue;
    auto it = grads.find(name);
    if (it == grads.end()) throw ConfigError("sgd_step: missing gradient for trainable parameter '" + name + "'");
    const Tensor& g = it->second;
    if (g.shape() != p.value.shape()) {
      throw ShapeError("sgd_step: gradient shape " + shape_string(g.shape()) + " != parameter shape " +
                       shape_string(p.value.shape()) + " for '" + name + "'");
    }
    double step = lr;
    for (const auto& grp : groups) {
      if (name.starts_with(grp.prefix)) {
        step *= grp.multiplier;
        break;
      }
    }
    auto v = p.momentum.data();
    auto w = p.value.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = cfg.momentum * v[i] + g[i] + cfg.weight_decay * w[i];
      w[i] -= step * v[i];
    }
  }
}

double lr_schedule(double eta0, double progress) {
  if (!(eta0 > 0.0)) throw ConfigError("lr_schedule: eta0 must be positive");
  if (!(progress >= 0.0 && progress <= 1.0)) throw ConfigError("lr_schedule: progress must lie in [0, 1]");
  return eta0 * std::pow(1.0 + 10.0 * progress, -0.75);
}

double finite_diff_check(const TapeLoss& loss, const ParamSet& params, double eps) {
  if (!(eps > 0.0)) throw ConfigError("finite_diff_check: eps must be positive");
  auto eval = [&](const ParamSet& ps) {
    Tape tape;
    return loss(tape, ps).value().item();
  };

  GradMap analytic;
  double base = 0.0;
  {
    Tape tape;
    Var l = loss(tape, params);
    base = l.value().item();
    analytic = tape.backward(l);
  }
  if (eval(params) != base) throw Error("finite_diff_check: loss function is not deterministic");

  ParamSet probe = params;
  double worst = 0.0;
  for (auto& [name, p] : probe) {
    if (!p.trainable) continue;
    const Tensor& a = analytic.at(name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + eps;
      const double up = eval(probe);
      p.value[i] = orig - eps;
      const double down = eval(probe);
      p.value[i] = orig;
      const double fd = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(a[i]), std::abs(fd), 1e-12});
      worst = std::max(worst, std::abs(a[i] - fd) / denom);
    }
  }
  return worst;
}

}  // namespace shot
