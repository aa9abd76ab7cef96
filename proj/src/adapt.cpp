#include "shot/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "shot/error.hpp"
#include "shot/metrics.hpp"

namespace shot {

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::Closed: return "closed";
    case Scenario::Partial: return "partial";
    case Scenario::Open: return "open";
  }
  return "closed";
}

Scenario parse_scenario(const std::string& s) {
  if (s == "closed") return Scenario::Closed;
  if (s == "partial") return Scenario::Partial;
  if (s == "open") return Scenario::Open;
  throw ConfigError("unknown scenario '" + s + "' (expected closed, partial or open)");
}

std::string to_string(PseudoLabelMode m) {
  switch (m) {
    case PseudoLabelMode::SelfSupervised: return "self";
    case PseudoLabelMode::Naive: return "naive";
    case PseudoLabelMode::None: return "none";
  }
  return "self";
}

PseudoLabelMode parse_pseudo_label_mode(const std::string& s) {
  if (s == "self") return PseudoLabelMode::SelfSupervised;
  if (s == "naive") return PseudoLabelMode::Naive;
  if (s == "none") return PseudoLabelMode::None;
  throw ConfigError("unknown pseudo-label mode '" + s + "' (expected self, naive or none)");
}

void validate(const AdaptConfig& cfg) {
  if (!(cfg.alpha >= 0.0 && cfg.alpha < 1.0)) throw ConfigError("alpha must lie in [0, 1)");
  if (!(cfg.beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (!(cfg.sgd.eta0 > 0.0)) throw ConfigError("eta0 must be positive");
  if (!(cfg.sgd.momentum >= 0.0 && cfg.sgd.momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(cfg.sgd.weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (cfg.batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (cfg.refinement_rounds < 0) throw ConfigError("refinement_rounds must be >= 0");
  if (!(cfg.tc_fraction >= 0.0)) throw ConfigError("tc_fraction must be >= 0");
  if (!(cfg.new_layer_lr_multiplier > 0.0)) throw ConfigError("new_layer_lr_multiplier must be positive");
  if (!(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0, 1)");
}

namespace {

std::size_t argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c) {
    if (row[c] > row[best]) best = c;
  }
  return best;
}

std::vector<int> gather(std::span<const int> v, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

std::vector<bool> gather(const std::vector<bool>& v, std::span<const std::size_t> idx) {
  std::vector<bool> out;
  if (v.empty()) return out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

double argmax_accuracy(const Model& model, const Tensor& x, std::span<const int> labels) {
  auto preds = predict_labels(model, x);
  return accuracy(preds, labels);
}

double eval_loss(const Model& model, const Tensor& x, std::span<const int> labels, double alpha) {
  Tape tape;
  auto fwd = forward_eval(model, tape, x);
  return smoothed_cross_entropy(fwd.logits, labels, alpha).value().item();
}

// Accuracy over samples whose label is a known class.
std::optional<double> known_accuracy(std::span<const int> preds, const std::vector<int>& labels, std::size_t k) {
  std::size_t n = 0, correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) continue;
    ++n;
    correct += preds[i] == labels[i];
  }
  if (n == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace

SourceResult train_source(const Model& init, const Dataset& source, const AdaptConfig& cfg) {
  validate(cfg);
  validate(source);
  const std::size_t k = init.dims.num_classes;
  if (source.dim() != init.dims.input_dim) throw ConfigError("train_source: feature width does not match the model");
  std::set<int> classes;
  for (int y : source.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw ConfigError("train_source: label " + std::to_string(y) + " outside the model's " + std::to_string(k) +
                        " classes");
    }
    classes.insert(y);
  }
  if (classes.size() < 2) throw ConfigError("train_source: source data holds a single class");

  const std::size_t n = source.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 split_rng(cfg.seed);
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.val_fraction * static_cast<double>(n))));
  if (n < n_val + 2) throw ConfigError("train_source: not enough samples for a train/validation split");
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  const Dataset train = source.subset(train_idx);
  const Dataset val = source.subset(val_idx);

  Model m = init;
  m.classifier_frozen = false;
  m.encoder.set_trainable(true);
  m.classifier.set_trainable(true);
  m.encoder.reset_momentum();
  m.classifier.reset_momentum();

  const std::size_t bs = std::min(cfg.batch_size, train.size());
  const std::size_t per_epoch = train.size() / bs;
  const std::size_t total_steps = std::max<std::size_t>(1, per_epoch * cfg.source_epochs);

  SourceResult result{m, -1.0, 0, {}};
  double best_val_loss = 0.0;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.source_epochs; ++epoch) {
    double loss_sum = 0.0;
    double lr = cfg.sgd.eta0;
    auto plan = batches(train.size(), bs, cfg.seed, static_cast<int>(epoch), BatchMode::Train);
    for (const auto& idx : plan) {
      lr = lr_schedule(cfg.sgd.eta0, static_cast<double>(step) / static_cast<double>(total_steps));
      Tape tape;
      auto fwd = forward(m, tape, train.features.gather_rows(idx), Mode::Train);
      Var loss = smoothed_cross_entropy(fwd.logits, gather(train.labels, idx), cfg.alpha);
      auto grads = tape.backward(loss);
      sgd_step(m.encoder, grads, lr, cfg.sgd);
      sgd_step(m.classifier, grads, lr, cfg.sgd);
      loss_sum += loss.value().item();
      ++step;
    }
    SourceEpoch log{epoch, lr, plan.empty() ? 0.0 : loss_sum / static_cast<double>(plan.size()),
                    argmax_accuracy(m, train.features, train.labels), argmax_accuracy(m, val.features, val.labels)};
    log.val_loss = eval_loss(m, val.features, val.labels, cfg.alpha);
    // Validation accuracy saturates quickly on easy data; ties go to the lower loss.
    if (log.val_acc > result.best_val_acc || (log.val_acc == result.best_val_acc && log.val_loss < best_val_loss)) {
      result.best_val_acc = log.val_acc;
      best_val_loss = log.val_loss;
      result.best_epoch = epoch;
      result.model = m;
    }
    result.history.push_back(log);
  }
  if (cfg.source_epochs == 0) result.best_val_acc = argmax_accuracy(m, val.features, val.labels);
  result.model.encoder.reset_momentum();
  result.model.classifier.reset_momentum();
  return result;
}

double RejectionMask::rejection_rate() const {
  if (rejected.empty()) return 0.0;
  return static_cast<double>(std::count(rejected.begin(), rejected.end(), true)) / static_cast<double>(rejected.size());
}

RejectionMask reject_unknown(const Tensor& logits) {
  const std::size_t n = logits.rows();
  const std::size_t k = logits.cols();
  if (n < 2) throw ConfigError("reject_unknown: need at least 2 samples");
  if (k < 2) throw ConfigError("reject_unknown: need at least 2 classes");

  RejectionMask out;
  out.rejected.assign(n, false);
  out.uncertainties.resize(n);
  const Tensor p = softmax_rows(logits);
  const double log_k = std::log(static_cast<double>(k));
  for (std::size_t i = 0; i < n; ++i) {
    double h = 0.0;
    for (double v : p.row(i)) {
      if (v > 0.0) h -= v * std::log(v);
    }
    out.uncertainties[i] = std::clamp(h / log_k, 0.0, 1.0);
  }

  // The optimal 1-D 2-means partition is a threshold split of the sorted values,
  // so scan every split between distinct values.
  std::vector<double> sorted = out.uncertainties;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) {
    out.cluster_means = {sorted.front(), sorted.front()};
    return out;
  }
  const double centre = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
  std::vector<double> prefix(n + 1, 0.0), prefix_sq(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = sorted[i] - centre;
    prefix[i + 1] = prefix[i] + v;
    prefix_sq[i + 1] = prefix_sq[i] + v * v;
  }
  auto sse = [&](std::size_t lo, std::size_t hi) {
    const double cnt = static_cast<double>(hi - lo);
    const double s = prefix[hi] - prefix[lo];
    return (prefix_sq[hi] - prefix_sq[lo]) - s * s / cnt;
  };
  std::size_t best_split = 0;
  double best = 0.0;
  for (std::size_t s = 1; s < n; ++s) {
    if (sorted[s - 1] == sorted[s]) continue;
    const double cost = sse(0, s) + sse(s, n);
    if (best_split == 0 || cost < best) {
      best = cost;
      best_split = s;
    }
  }
  const double threshold = sorted[best_split];
  double lo_sum = 0.0, hi_sum = 0.0;
  std::size_t hi_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out.rejected[i] = out.uncertainties[i] >= threshold;
    if (out.rejected[i]) {
      hi_sum += out.uncertainties[i];
      ++hi_count;
    } else {
      lo_sum += out.uncertainties[i];
    }
  }
  out.cluster_means = {lo_sum / static_cast<double>(n - hi_count), hi_sum / static_cast<double>(hi_count)};
  return out;
}

nlohmann::json to_json(const EpochLog& e) {
  nlohmann::json j{{"epoch", e.epoch}, {"lr", e.lr}, {"loss", e.loss}, {"L_ent", e.ent}, {"L_div", e.div}, {"L_pl", e.pl}};
  if (e.train_acc) j["train_acc"] = *e.train_acc;
  if (e.pseudo_label_agreement) j["pseudo_label_agreement"] = *e.pseudo_label_agreement;
  if (e.pseudo_label_acc) j["pseudo_label_acc"] = *e.pseudo_label_acc;
  if (e.rejection_rate) j["rejection_rate"] = *e.rejection_rate;
  return j;
}

void write_epoch_log(const std::filesystem::path& path, std::span<const EpochLog> history) {
  std::ofstream out(path);
  if (!out) throw IoError("write_epoch_log: cannot write " + path.string());
  for (const auto& e : history) out << to_json(e).dump() << '\n';
}

AdaptResult adapt(const Model& source_model, const Tensor& target, const AdaptConfig& cfg, const AdaptMonitor& monitor) {
  validate(cfg);
  const std::size_t n = target.rows();
  if (n < 2) throw ConfigError("adapt: target set needs at least 2 samples");
  if (target.cols() != source_model.dims.input_dim) throw ConfigError("adapt: target width does not match the model");
  if (monitor.labels && monitor.labels->size() != n) throw ConfigError("adapt: monitor labels have the wrong length");
  const std::size_t k = source_model.dims.num_classes;

  Model m = clone_encoder(freeze_classifier(source_model));
  m.encoder.set_trainable(true);
  if (cfg.reestimate_bn) reestimate_batch_norm(m, target);

  const std::vector<LrGroup> groups{{param_names::kHiddenPrefix, 1.0 / cfg.new_layer_lr_multiplier}};
  ShotLossOptions loss_opts;
  loss_opts.beta = cfg.beta;
  loss_opts.include_div = cfg.effective_include_div();
  loss_opts.mask_div = cfg.reject_from_div;
  loss_opts.mask_pl = cfg.reject_from_pl;

  PseudoLabelConfig pl_cfg;
  pl_cfg.rounds = cfg.refinement_rounds;
  pl_cfg.min_count = cfg.tc;
  pl_cfg.min_count_fraction = cfg.tc_fraction;

  const std::size_t bs = std::min(cfg.batch_size, n);
  const std::size_t per_epoch = n / bs;
  const std::size_t total_steps = std::max<std::size_t>(1, per_epoch * cfg.adapt_epochs);
  const bool open = cfg.scenario == Scenario::Open;

  AdaptResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.adapt_epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;

    std::vector<bool> include;
    std::vector<bool> rejected;
    if (open) {
      auto mask = reject_unknown(predict(m, target).logits);
      log.rejection_rate = mask.rejection_rate();
      rejected = mask.rejected;
      include.resize(n);
      for (std::size_t i = 0; i < n; ++i) include[i] = !rejected[i];
    }

    std::vector<int> labels;
    if (cfg.pseudo_labels != PseudoLabelMode::None) {
      if (cfg.pseudo_labels == PseudoLabelMode::SelfSupervised) {
        auto gen = generate(m, target, pl_cfg, rejected);
        if (!monitor.pseudo_label_dump_dir.empty()) {
          dump_pseudo_labels(monitor.pseudo_label_dump_dir / "centroids.csv", monitor.pseudo_label_dump_dir / "pseudo_labels.csv",
                             static_cast<int>(epoch), gen);
        }
        labels = std::move(gen.labels.labels);
      } else {
        labels = argmax_labels(m, target, rejected).labels;
      }
      const auto preds = predict_labels(m, target);
      std::size_t agree = 0, counted = 0, correct = 0, with_truth = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] == kRejected) continue;
        ++counted;
        agree += labels[i] == preds[i];
        if (monitor.labels && (*monitor.labels)[i] >= 0 && static_cast<std::size_t>((*monitor.labels)[i]) < k) {
          ++with_truth;
          correct += labels[i] == (*monitor.labels)[i];
        }
      }
      if (counted) log.pseudo_label_agreement = static_cast<double>(agree) / static_cast<double>(counted);
      if (with_truth) log.pseudo_label_acc = static_cast<double>(correct) / static_cast<double>(with_truth);
    }

    auto plan = batches(n, bs, cfg.seed, static_cast<int>(epoch), BatchMode::Train);
    for (const auto& idx : plan) {
      log.lr = lr_schedule(cfg.sgd.eta0, static_cast<double>(step) / static_cast<double>(total_steps));
      Tape tape;
      const Tensor xb = target.gather_rows(idx);
      auto fwd = cfg.effective_freeze_bn_stats() ? forward_eval(m, tape, xb) : forward(m, tape, xb, Mode::Train);
      const std::vector<int> batch_labels = labels.empty() ? std::vector<int>{} : gather(labels, idx);
      auto loss = shot_objective(fwd.logits, batch_labels, loss_opts, gather(include, idx));
      auto grads = tape.backward(loss.total);
      sgd_step(m.encoder, grads, log.lr, cfg.sgd, groups);
      log.loss += loss.value.value;
      log.ent += loss.value.components.at("ent");
      log.div += loss.value.components.at("div");
      if (auto it = loss.value.components.find("pl"); it != loss.value.components.end()) log.pl += it->second;
      ++step;
    }
    if (!plan.empty()) {
      const double b = static_cast<double>(plan.size());
      log.loss /= b;
      log.ent /= b;
      log.div /= b;
      log.pl /= b;
    }
    if (monitor.labels) log.train_acc = known_accuracy(predict_labels(m, target), *monitor.labels, k);
    result.history.push_back(log);
  }

  if (open) result.rejection = reject_unknown(predict(m, target).logits);
  m.encoder.reset_momentum();
  result.model = std::move(m);
  return result;
}

AdaptResult adapt_shot(const Model& source_model, const Tensor& target, const AdaptConfig& cfg,
                       const AdaptMonitor& monitor) {
  if (cfg.scenario != Scenario::Closed) throw ConfigError("adapt_shot: scenario must be closed");
  return adapt(source_model, target, cfg, monitor);
}

AdaptResult adapt_partial(const Model& source_model, const Tensor& target, const AdaptConfig& cfg,
                          const AdaptMonitor& monitor) {
  if (cfg.scenario != Scenario::Partial) throw ConfigError("adapt_partial: scenario must be partial");
  return adapt(source_model, target, cfg, monitor);
}

AdaptResult adapt_open(const Model& source_model, const Tensor& target, const AdaptConfig& cfg,
                       const AdaptMonitor& monitor) {
  if (cfg.scenario != Scenario::Open) throw ConfigError("adapt_open: scenario must be open");
  return adapt(source_model, target, cfg, monitor);
}

AdaptResult adapt_naive_pl(const Model& source_model, const Tensor& target, const AdaptConfig& cfg,
                           const AdaptMonitor& monitor) {
  AdaptConfig c = cfg;
  c.pseudo_labels = PseudoLabelMode::Naive;
  return adapt(source_model, target, c, monitor);
}

std::vector<int> predict_labels(const Model& model, const Tensor& data, const std::vector<bool>& rejected) {
  if (!rejected.empty() && rejected.size() != data.rows()) throw ShapeError("predict_labels: mask length mismatch");
  const Tensor logits = predict(model, data).logits;
  std::vector<int> out(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    out[i] = (!rejected.empty() && rejected[i]) ? static_cast<int>(model.dims.num_classes)
                                                : static_cast<int>(argmax(logits.row(i)));
  }
  return out;
}

std::vector<int> multi_source_predict(std::span<const Model> models, const Tensor& data) {
  if (models.empty()) throw ConfigError("multi_source_predict: no models");
  const std::size_t k = models.front().dims.num_classes;
  Tensor total(data.rows(), k);
  for (const auto& m : models) {
    if (m.dims.num_classes != k) throw ConfigError("multi_source_predict: models disagree on the number of classes");
    const Tensor p = softmax_rows(predict(m, data).logits);
    for (std::size_t i = 0; i < p.size(); ++i) total[i] += p[i];
  }
  std::vector<int> out(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) out[i] = static_cast<int>(argmax(total.row(i)));
  return out;
}

Dataset multi_target_pool(std::span<const Dataset> targets) {
  if (targets.empty()) throw ConfigError("multi_target_pool: no datasets");
  const auto& first = targets.front();
  std::vector<double> values;
  Dataset out;
  out.num_classes = first.num_classes;
  out.class_ids = first.class_ids;
  for (const auto& t : targets) {
    if (t.dim() != first.dim()) throw ConfigError("multi_target_pool: feature dimensions differ");
    if (t.num_classes != first.num_classes) throw ConfigError("multi_target_pool: class counts differ");
    values.insert(values.end(), t.features.data().begin(), t.features.data().end());
    out.labels.insert(out.labels.end(), t.labels.begin(), t.labels.end());
    out.domain.insert(out.domain.end(), t.domain.begin(), t.domain.end());
  }
  out.features = Tensor({out.labels.size(), first.dim()}, std::move(values));
  return out;
}

}  // namespace shot
