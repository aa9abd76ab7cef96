#include "shot/losses.hpp"

#include <cmath>

#include "shot/error.hpp"

namespace shot {

namespace {

void check_logits(const Tensor& logits, const char* op) {
  if (logits.rank() != 2) throw ShapeError(std::string(op) + ": logits must be n x K, got " + shape_string(logits.shape()));
}

void check_mask(const std::vector<bool>& include, std::size_t n, const char* op) {
  if (!include.empty() && include.size() != n) {
    throw ShapeError(std::string(op) + ": mask length " + std::to_string(include.size()) + " != batch size " +
                     std::to_string(n));
  }
}

// n x 1 column holding 1/count on included rows, plus the count.
std::pair<Tensor, std::size_t> row_weights(const std::vector<bool>& include, std::size_t n) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) count += include.empty() || include[i];
  Tensor w(n, 1);
  if (count == 0) return {w, 0};
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < n; ++i) w[i] = (include.empty() || include[i]) ? inv : 0.0;
  return {w, count};
}

Var zero(Tape& tape) { return tape.constant(Tensor::scalar(0.0)); }

}  // namespace

std::vector<double> smoothed_target(int label, std::size_t num_classes, double alpha) {
  if (label < 0 || static_cast<std::size_t>(label) >= num_classes) throw ConfigError("smoothed_target: label out of range");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("smoothed_target: alpha must lie in [0, 1)");
  const double k = static_cast<double>(num_classes);
  std::vector<double> q(num_classes, alpha / k);
  q[static_cast<std::size_t>(label)] = (1.0 - alpha) + alpha / k;
  return q;
}

Var smoothed_cross_entropy(Var logits, std::span<const int> labels, double alpha) {
  const Tensor& lv = logits.value();
  check_logits(lv, "smoothed_cross_entropy");
  const std::size_t n = lv.rows();
  const std::size_t k = lv.cols();
  if (labels.empty()) throw ConfigError("smoothed_cross_entropy: empty batch");
  if (labels.size() != n) throw ShapeError("smoothed_cross_entropy: label count != batch size");
  Tensor q(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = smoothed_target(labels[i], k, alpha);
    for (std::size_t j = 0; j < k; ++j) q(i, j) = row[j] / static_cast<double>(n);
  }
  Tape& tape = logits.tape();
  return neg(sum(tape.constant(std::move(q)) * log_softmax(logits)));
}

Var entropy_loss(Var logits, const std::vector<bool>& include) {
  const Tensor& lv = logits.value();
  check_logits(lv, "entropy_loss");
  check_mask(include, lv.rows(), "entropy_loss");
  auto [w, count] = row_weights(include, lv.rows());
  Tape& tape = logits.tape();
  if (count == 0) return zero(tape);
  Var per_row = sum_axis(softmax(logits) * log_softmax(logits), 1);
  return neg(sum(per_row * tape.constant(std::move(w))));
}

Var diversity_loss(Var logits, const std::vector<bool>& include) {
  const Tensor& lv = logits.value();
  check_logits(lv, "diversity_loss");
  check_mask(include, lv.rows(), "diversity_loss");
  auto [w, count] = row_weights(include, lv.rows());
  Tape& tape = logits.tape();
  if (count == 0) return zero(tape);
  Var pbar = sum_axis(softmax(logits) * tape.constant(std::move(w)), 0);
  return sum(xlogx(pbar));
}

double diversity_loss_kl_form(const Tensor& logits) {
  check_logits(logits, "diversity_loss_kl_form");
  Tensor p = softmax_rows(logits);
  const std::size_t n = p.rows();
  const std::size_t k = p.cols();
  const double uniform = 1.0 / static_cast<double>(k);
  double kl = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    double pbar = 0.0;
    for (std::size_t i = 0; i < n; ++i) pbar += p(i, j);
    pbar /= static_cast<double>(n);
    if (pbar > 0.0) kl += pbar * std::log(pbar / uniform);
  }
  return kl - std::log(static_cast<double>(k));
}

Var pseudo_label_ce(Var logits, std::span<const int> pseudo_labels) {
  const Tensor& lv = logits.value();
  check_logits(lv, "pseudo_label_ce");
  const std::size_t n = lv.rows();
  const std::size_t k = lv.cols();
  if (pseudo_labels.size() != n) throw ShapeError("pseudo_label_ce: label count != batch size");
  std::size_t count = 0;
  for (int y : pseudo_labels) {
    if (y == kRejected) continue;
    if (y < 0 || static_cast<std::size_t>(y) >= k) throw ConfigError("pseudo_label_ce: label out of range");
    ++count;
  }
  Tape& tape = logits.tape();
  if (count == 0) return zero(tape);
  Tensor onehot(n, k);
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < n; ++i) {
    if (pseudo_labels[i] != kRejected) onehot(i, static_cast<std::size_t>(pseudo_labels[i])) = inv;
  }
  return neg(sum(tape.constant(std::move(onehot)) * log_softmax(logits)));
}

ShotLoss shot_objective(Var logits, std::span<const int> pseudo_labels, const ShotLossOptions& opts,
                        const std::vector<bool>& mask) {
  if (!(opts.beta >= 0.0)) throw ConfigError("shot_objective: beta must be >= 0");
  const std::size_t n = logits.value().rows();
  check_mask(mask, n, "shot_objective");
  const std::vector<bool> none;

  Var ent = entropy_loss(logits, opts.mask_ent ? mask : none);
  Var total = ent;
  ShotLoss out;
  out.value.components["ent"] = ent.value().item();

  Var div = diversity_loss(logits, opts.mask_div ? mask : none);
  out.value.components["div"] = div.value().item();
  if (opts.include_div) total = total + div;

  if (!pseudo_labels.empty()) {
    std::vector<int> labels(pseudo_labels.begin(), pseudo_labels.end());
    if (opts.mask_pl && !mask.empty()) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) labels[i] = kRejected;
      }
    }
    Var pl = pseudo_label_ce(logits, labels);
    out.value.components["pl"] = pl.value().item();
    if (opts.beta > 0.0) total = total + scale(pl, opts.beta);
  }

  out.total = total;
  out.value.value = total.value().item();
  return out;
}

}  // namespace shot
