#include "shot/metrics.hpp"

#include <Eigen/Dense>

#include "shot/error.hpp"

namespace shot {

namespace {

void check_lengths(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) {
    throw ShapeError("metrics: " + std::to_string(preds.size()) + " predictions vs " + std::to_string(labels.size()) +
                     " labels");
  }
}

Eigen::MatrixXd centered(const Tensor& features) {
  const auto n = static_cast<Eigen::Index>(features.rows());
  const auto d = static_cast<Eigen::Index>(features.cols());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = features(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  x.rowwise() -= x.colwise().mean();
  return x;
}

}  // namespace

double accuracy(std::span<const int> preds, std::span<const int> labels) {
  check_lengths(preds, labels);
  if (preds.empty()) throw ConfigError("accuracy: no samples");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

std::vector<std::optional<double>> per_class_accuracy(std::span<const int> preds, std::span<const int> labels,
                                                      std::size_t num_classes) {
  check_lengths(preds, labels);
  std::vector<std::size_t> correct(num_classes, 0), count(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw ConfigError("per_class_accuracy: label out of range");
    }
    const auto y = static_cast<std::size_t>(labels[i]);
    ++count[y];
    correct[y] += preds[i] == labels[i];
  }
  std::vector<std::optional<double>> out(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (count[k] > 0) out[k] = static_cast<double>(correct[k]) / static_cast<double>(count[k]);
  }
  return out;
}

std::size_t ConfusionCounts::total() const {
  std::size_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

ConfusionCounts confusion(std::span<const int> preds, std::span<const int> labels, std::size_t num_known) {
  check_lengths(preds, labels);
  const std::size_t w = num_known + 1;
  ConfusionCounts out{num_known, std::vector<std::size_t>(w * w, 0)};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) > num_known || preds[i] < 0 ||
        static_cast<std::size_t>(preds[i]) > num_known) {
      throw ConfigError("confusion: class id out of range");
    }
    ++out.counts[static_cast<std::size_t>(labels[i]) * w + static_cast<std::size_t>(preds[i])];
  }
  return out;
}

OpenSetScores os_scores(std::span<const int> preds, std::span<const int> labels, std::size_t num_known) {
  for (int p : preds) {
    if (p < 0 || static_cast<std::size_t>(p) > num_known) throw ConfigError("os_scores: prediction out of range");
  }
  auto acc = per_class_accuracy(preds, labels, num_known + 1);
  OpenSetScores out;
  double known_sum = 0.0;
  std::size_t known_present = 0;
  for (std::size_t k = 0; k < num_known; ++k) {
    if (!acc[k]) {
      out.all_classes_present = false;
      continue;
    }
    known_sum += *acc[k];
    ++known_present;
  }
  out.unknown_acc = acc[num_known];
  if (!out.unknown_acc) out.all_classes_present = false;
  if (known_present == 0 && !out.unknown_acc) throw ConfigError("os_scores: no samples");
  out.os_star = known_present ? known_sum / static_cast<double>(known_present) : 0.0;
  const double all_sum = known_sum + out.unknown_acc.value_or(0.0);
  const std::size_t all_present = known_present + (out.unknown_acc ? 1 : 0);
  out.os = all_sum / static_cast<double>(all_present);
  return out;
}

Tensor project_2d(const Tensor& features) {
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  if (n < 2) throw ConfigError("project_2d: need at least 2 rows");
  Eigen::MatrixXd x = centered(features);
  Tensor out(n, 2);
  if (d == 1) {
    for (std::size_t i = 0; i < n; ++i) out(i, 0) = x(static_cast<Eigen::Index>(i), 0);
    return out;
  }
  Eigen::MatrixXd cov = x.transpose() * x;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError("project_2d: eigendecomposition failed");
  // Eigenvalues ascend; the last two columns are the leading directions.
  const auto dd = static_cast<Eigen::Index>(d);
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd dir = eig.eigenvectors().col(dd - 1 - c);
    for (Eigen::Index j = 0; j < dd; ++j) {
      if (dir(j) != 0.0) {
        if (dir(j) < 0.0) dir = -dir;
        break;
      }
    }
    Eigen::VectorXd proj = x * dir;
    for (std::size_t i = 0; i < n; ++i) out(i, static_cast<std::size_t>(c)) = proj(static_cast<Eigen::Index>(i));
  }
  return out;
}

double reconstruction_error(const Tensor& features, const Tensor& basis) {
  if (basis.cols() != features.cols()) throw ShapeError("reconstruction_error: basis width != feature width");
  Eigen::MatrixXd x = centered(features);
  Eigen::MatrixXd b(static_cast<Eigen::Index>(basis.rows()), static_cast<Eigen::Index>(basis.cols()));
  for (std::size_t i = 0; i < basis.rows(); ++i)
    for (std::size_t j = 0; j < basis.cols(); ++j) b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = basis(i, j);
  Eigen::MatrixXd recon = (x * b.transpose()) * b;
  return (x - recon).squaredNorm();
}

}  // namespace shot
