#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"
#include "shot/tensor.hpp"

namespace shot {

// Features, integer labels and per-sample domain tags. In open-set target
// data the label num_classes marks a sample of an unknown class.
struct Dataset {
  Tensor features;
  std::vector<int> labels;
  std::vector<int> domain;
  std::size_t num_classes = 0;
  // Original class id of each compact label after relabelling; empty = identity.
  std::vector<int> class_ids;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
  int unknown_label() const { return static_cast<int>(num_classes); }
  bool has_unknown() const;

  // Rows in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Throws ConfigError if the dataset breaks its invariants.
void validate(const Dataset& data);

struct BlobSpec {
  std::size_t num_classes = 4;
  std::size_t n_per_class = 200;
  std::size_t dim = 2;
  double class_sep = 4.0;
  double noise_sigma = 0.3;
};

// Class means evenly spaced on a circle of radius class_sep in the first two
// coordinates; isotropic Gaussian noise. Samples are grouped by class.
Dataset make_blobs(const BlobSpec& spec, std::uint64_t seed, int domain_tag = 0);

struct ShiftSpec {
  double rotation_deg = 0.0;
  std::vector<double> translation;  // empty = zero
  double scale = 1.0;
  double noise_sigma = 0.0;
};

// x -> scale * R(rotation) x + translation + N(0, noise_sigma^2). Rotation acts
// on the first two coordinates. Labels and tags are unchanged.
Dataset apply_shift(const Dataset& data, const ShiftSpec& spec, std::uint64_t seed);

enum class Excluded { Drop, MarkUnknown };

// Keeps samples of `keep`. With relabel, kept classes are renumbered 0..|keep|-1
// in the order given and num_classes becomes |keep|. With MarkUnknown, the other
// samples stay and carry the unknown label.
Dataset subset_classes(const Dataset& data, const std::vector<int>& keep, bool relabel,
                       Excluded excluded = Excluded::Drop);

enum class BatchMode { Train, Eval };

// Shuffled index batches for one epoch, seeded by (seed, epoch). Train mode
// drops a trailing batch shorter than batch_size; eval mode keeps it.
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size, std::uint64_t seed, int epoch,
                                              BatchMode mode);

// CSV with header x0..x{d-1},label,domain_tag plus a JSON sidecar
// (<csv>.json) holding num_classes, class_ids and generator parameters.
void save_dataset(const Dataset& data, const std::filesystem::path& csv, const nlohmann::json& generator = {});
Dataset load_dataset(const std::filesystem::path& csv);

}  // namespace shot
