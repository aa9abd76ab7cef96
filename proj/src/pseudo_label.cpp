#include "shot/pseudo_label.hpp"

#include <cmath>
#include <fstream>

#include "shot/autodiff.hpp"
#include "shot/error.hpp"
#include "shot/losses.hpp"

namespace shot {

namespace {

bool included(const std::vector<bool>& mask, std::size_t i) { return mask.empty() || mask[i]; }

void check_rows(const std::vector<bool>& mask, std::size_t n, const char* op) {
  if (!mask.empty() && mask.size() != n) throw ShapeError(std::string(op) + ": mask length does not match rows");
}

}  // namespace

std::size_t CentroidSet::num_active() const {
  std::size_t n = 0;
  for (bool a : active) n += a;
  return n;
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_distance: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw NumericError("cosine_distance: zero vector");
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

CentroidSet initial_centroids(const Tensor& features, const Tensor& soft_outputs, const std::vector<bool>& include) {
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  const std::size_t k = soft_outputs.cols();
  if (n == 0) throw ConfigError("initial_centroids: no samples");
  if (soft_outputs.rows() != n) throw ShapeError("initial_centroids: features and outputs differ in rows");
  check_rows(include, n, "initial_centroids");

  CentroidSet out{Tensor(k, d), std::vector<double>(k, 0.0), std::vector<bool>(k, false)};
  for (std::size_t i = 0; i < n; ++i) {
    if (!included(include, i)) continue;
    for (std::size_t c = 0; c < k; ++c) {
      const double w = soft_outputs(i, c);
      out.mass[c] += w;
      for (std::size_t j = 0; j < d; ++j) out.centroids(c, j) += w * features(i, j);
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    out.active[c] = out.mass[c] >= kMassEpsilon;
    if (!out.active[c]) continue;
    for (std::size_t j = 0; j < d; ++j) out.centroids(c, j) /= out.mass[c];
  }
  return out;
}

PseudoLabels assign_labels(const Tensor& features, const CentroidSet& cents, const std::vector<bool>& include) {
  if (cents.num_active() == 0) throw ConfigError("assign_labels: no active centroids");
  if (features.cols() != cents.centroids.cols()) throw ShapeError("assign_labels: feature and centroid widths differ");
  const std::size_t n = features.rows();
  check_rows(include, n, "assign_labels");
  PseudoLabels out{std::vector<int>(n, kRejected), 0};
  for (std::size_t i = 0; i < n; ++i) {
    if (!included(include, i)) continue;
    double best = 0.0;
    int best_k = kRejected;
    for (std::size_t c = 0; c < cents.num_classes(); ++c) {
      if (!cents.active[c]) continue;
      const double dist = cosine_distance(features.row(i), cents.centroids.row(c));
      if (best_k == kRejected || dist < best) {
        best = dist;
        best_k = static_cast<int>(c);
      }
    }
    out.labels[i] = best_k;
  }
  return out;
}

Refinement refine(const Tensor& features, const PseudoLabels& labels, int rounds, std::size_t num_classes,
                  const std::vector<bool>& allowed) {
  if (rounds < 1) throw ConfigError("refine: rounds must be >= 1");
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  if (labels.labels.size() != n) throw ShapeError("refine: label count does not match rows");
  if (!allowed.empty() && allowed.size() != num_classes) throw ShapeError("refine: allowed mask has wrong length");

  std::vector<bool> include(n);
  for (std::size_t i = 0; i < n; ++i) include[i] = labels.labels[i] != kRejected;

  Refinement out{{}, labels};
  for (int r = 0; r < rounds; ++r) {
    CentroidSet cents{Tensor(num_classes, d), std::vector<double>(num_classes, 0.0),
                      std::vector<bool>(num_classes, false)};
    for (std::size_t i = 0; i < n; ++i) {
      const int y = out.labels.labels[i];
      if (y == kRejected) continue;
      const auto c = static_cast<std::size_t>(y);
      if (c >= num_classes) throw ConfigError("refine: label out of range");
      cents.mass[c] += 1.0;
      for (std::size_t j = 0; j < d; ++j) cents.centroids(c, j) += features(i, j);
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
      cents.active[c] = cents.mass[c] > 0.0 && (allowed.empty() || allowed[c]);
      if (!cents.active[c]) continue;
      for (std::size_t j = 0; j < d; ++j) cents.centroids(c, j) /= cents.mass[c];
    }
    out.labels = assign_labels(features, cents, include);
    out.labels.round = labels.round + r + 1;
    out.centroids = std::move(cents);
  }
  return out;
}

std::vector<std::size_t> label_counts(const PseudoLabels& labels, std::size_t num_classes) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int y : labels.labels) {
    if (y == kRejected) continue;
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw ConfigError("label_counts: label out of range");
    ++counts[static_cast<std::size_t>(y)];
  }
  return counts;
}

CentroidSet prune_centroids(CentroidSet cents, std::span<const std::size_t> counts, std::size_t min_count) {
  if (counts.size() != cents.num_classes()) throw ShapeError("prune_centroids: counts length != K");
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] < min_count) cents.active[c] = false;
  }
  if (cents.num_active() == 0) throw ConfigError("prune_centroids: every centroid was pruned");
  return cents;
}

PseudoLabelResult generate(const Model& model, const Tensor& target, const PseudoLabelConfig& cfg,
                           const std::vector<bool>& rejected) {
  const std::size_t n = target.rows();
  const std::size_t k = model.dims.num_classes;
  check_rows(rejected, n, "generate");
  std::vector<bool> include(n);
  for (std::size_t i = 0; i < n; ++i) include[i] = rejected.empty() || !rejected[i];

  Outputs out = predict(model, target);
  Tensor soft = softmax_rows(out.logits);

  CentroidSet cents = initial_centroids(out.features, soft, include);
  PseudoLabels labels = assign_labels(out.features, cents, include);

  std::size_t min_count = cfg.min_count;
  if (cfg.min_count_fraction > 0.0) {
    min_count = static_cast<std::size_t>(std::lround(cfg.min_count_fraction * static_cast<double>(n) / static_cast<double>(k)));
  }
  if (min_count > 0) {
    cents = prune_centroids(std::move(cents), label_counts(labels, k), min_count);
    labels = assign_labels(out.features, cents, include);
  }

  if (cfg.rounds == 0) return {labels, cents};
  Refinement r = refine(out.features, labels, cfg.rounds, k, cents.active);
  return {std::move(r.labels), std::move(r.centroids)};
}

PseudoLabels argmax_labels(const Model& model, const Tensor& target, const std::vector<bool>& rejected) {
  check_rows(rejected, target.rows(), "argmax_labels");
  Outputs out = predict(model, target);
  PseudoLabels labels{std::vector<int>(target.rows(), kRejected), 0};
  for (std::size_t i = 0; i < target.rows(); ++i) {
    if (!rejected.empty() && rejected[i]) continue;
    auto row = out.logits.row(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[best]) best = c;
    }
    labels.labels[i] = static_cast<int>(best);
  }
  return labels;
}

void dump_pseudo_labels(const std::filesystem::path& centroid_csv, const std::filesystem::path& label_csv, int epoch,
                        const PseudoLabelResult& result) {
  const bool new_c = !std::filesystem::exists(centroid_csv);
  std::ofstream c(centroid_csv, std::ios::app);
  if (!c) throw IoError("dump_pseudo_labels: cannot write " + centroid_csv.string());
  const auto& cs = result.centroids;
  if (new_c) {
    c << "epoch,class,mass,active";
    for (std::size_t j = 0; j < cs.centroids.cols(); ++j) c << ",c" << j;
    c << '\n';
  }
  c.precision(6);
  for (std::size_t k = 0; k < cs.num_classes(); ++k) {
    c << epoch << ',' << k << ',' << cs.mass[k] << ',' << (cs.active[k] ? 1 : 0);
    for (double v : cs.centroids.row(k)) c << ',' << v;
    c << '\n';
  }

  const bool new_l = !std::filesystem::exists(label_csv);
  std::ofstream l(label_csv, std::ios::app);
  if (!l) throw IoError("dump_pseudo_labels: cannot write " + label_csv.string());
  if (new_l) l << "epoch,sample,label\n";
  for (std::size_t i = 0; i < result.labels.labels.size(); ++i) l << epoch << ',' << i << ',' << result.labels.labels[i] << '\n';
}

}  // namespace shot
