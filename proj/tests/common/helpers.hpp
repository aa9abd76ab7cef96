#pragma once

#include <cstdint>
#include <random>

#include "shot/tensor.hpp"

namespace shot::testing {

inline Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(rows, cols);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

inline Tensor random_normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double sigma = 1.0) {
  std::normal_distribution<double> n(0.0, sigma);
  Tensor t(rows, cols);
  for (auto& v : t.data()) v = n(rng);
  return t;
}

}  // namespace shot::testing

#include "shot/losses.hpp"
#include "shot/model.hpp"
#include "shot/optim.hpp"

namespace shot::testing {

// Max relative finite-difference error of the full objective (entropy,
// diversity and pseudo-label terms) with respect to every model parameter,
// on `n` random points pushed through a train-mode forward pass.
inline double shot_objective_gradient_error(std::uint64_t seed, std::size_t n = 32) {
  const ModelDims dims{2, {64}, 16, 4};
  const Model model = build_model(dims, seed);
  std::mt19937_64 rng(seed);
  const Tensor x = random_tensor(n, 2, rng, -3.0, 3.0);
  std::vector<int> pseudo(n);
  std::uniform_int_distribution<int> cls(0, 3);
  for (auto& y : pseudo) y = cls(rng);
  ParamSet all;
  for (const auto& [name, p] : model.encoder) all.add(name, p.value);
  for (const auto& [name, p] : model.classifier) all.add(name, p.value);
  auto loss = [&](Tape& tape, const ParamSet& params) {
    Model m = model;
    for (auto& [name, p] : m.encoder) p.value = params.value(name);
    for (auto& [name, p] : m.classifier) p.value = params.value(name);
    const auto out = forward(m, tape, x, Mode::Train);
    return shot_objective(out.logits, pseudo, ShotLossOptions{0.3, true}).total;
  };
  return finite_diff_check(loss, all, 1e-5);
}

}  // namespace shot::testing
