#include "shot/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "shot/error.hpp"

namespace shot {

bool Dataset::has_unknown() const {
  return std::any_of(labels.begin(), labels.end(), [this](int y) { return y == unknown_label(); });
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.features = features.gather_rows(indices);
  out.num_classes = num_classes;
  out.class_ids = class_ids;
  out.labels.reserve(indices.size());
  out.domain.reserve(indices.size());
  for (auto i : indices) {
    out.labels.push_back(labels.at(i));
    out.domain.push_back(domain.at(i));
  }
  return out;
}

void validate(const Dataset& data) {
  const std::size_t n = data.labels.size();
  if (n == 0) throw ConfigError("dataset: no samples");
  if (data.features.rows() != n || data.domain.size() != n) throw ConfigError("dataset: column lengths differ");
  if (data.num_classes < 1) throw ConfigError("dataset: num_classes must be >= 1");
  require_finite(data.features, "dataset features");
  for (int y : data.labels) {
    if (y < 0 || y > data.unknown_label()) throw ConfigError("dataset: label " + std::to_string(y) + " out of range");
  }
}

Dataset make_blobs(const BlobSpec& spec, std::uint64_t seed, int domain_tag) {
  if (spec.num_classes < 2) throw ConfigError("make_blobs: need at least 2 classes");
  if (spec.n_per_class < 1) throw ConfigError("make_blobs: n_per_class must be >= 1");
  if (spec.dim < 2) throw ConfigError("make_blobs: dim must be >= 2");
  if (!(spec.noise_sigma >= 0.0)) throw ConfigError("make_blobs: noise_sigma must be >= 0");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t n = spec.num_classes * spec.n_per_class;
  Dataset out;
  out.features = Tensor(n, spec.dim);
  out.num_classes = spec.num_classes;
  out.labels.reserve(n);
  out.domain.assign(n, domain_tag);
  std::size_t row = 0;
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(spec.num_classes);
    for (std::size_t i = 0; i < spec.n_per_class; ++i, ++row) {
      for (std::size_t j = 0; j < spec.dim; ++j) {
        double centre = 0.0;
        if (j == 0) centre = spec.class_sep * std::cos(angle);
        if (j == 1) centre = spec.class_sep * std::sin(angle);
        out.features(row, j) = centre + (spec.noise_sigma > 0.0 ? spec.noise_sigma * noise(rng) : 0.0);
      }
      out.labels.push_back(static_cast<int>(k));
    }
  }
  return out;
}

Dataset apply_shift(const Dataset& data, const ShiftSpec& spec, std::uint64_t seed) {
  if (!(spec.scale > 0.0)) throw ConfigError("apply_shift: scale must be positive");
  if (!(spec.noise_sigma >= 0.0)) throw ConfigError("apply_shift: noise_sigma must be >= 0");
  const std::size_t d = data.dim();
  if (!spec.translation.empty() && spec.translation.size() != d) {
    throw ConfigError("apply_shift: translation has " + std::to_string(spec.translation.size()) + " entries, need " +
                      std::to_string(d));
  }
  if (d < 2 && spec.rotation_deg != 0.0) throw ConfigError("apply_shift: rotation needs at least 2 dimensions");

  const double theta = spec.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  Dataset out = data;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto x = out.features.row(i);
    if (d >= 2) {
      const double x0 = x[0], x1 = x[1];
      x[0] = c * x0 - s * x1;
      x[1] = s * x0 + c * x1;
    }
    for (std::size_t j = 0; j < d; ++j) {
      x[j] *= spec.scale;
      if (!spec.translation.empty()) x[j] += spec.translation[j];
      if (spec.noise_sigma > 0.0) x[j] += spec.noise_sigma * noise(rng);
    }
  }
  return out;
}

Dataset subset_classes(const Dataset& data, const std::vector<int>& keep, bool relabel, Excluded excluded) {
  if (keep.empty()) throw ConfigError("subset_classes: keep set is empty");
  for (int k : keep) {
    if (k < 0 || static_cast<std::size_t>(k) >= data.num_classes) throw ConfigError("subset_classes: class id out of range");
  }
  std::vector<int> compact(data.num_classes + 1, -1);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (compact[static_cast<std::size_t>(keep[i])] != -1) throw ConfigError("subset_classes: duplicate class id");
    compact[static_cast<std::size_t>(keep[i])] = relabel ? static_cast<int>(i) : keep[i];
  }

  Dataset out;
  out.num_classes = relabel ? keep.size() : data.num_classes;
  if (relabel) {
    for (int k : keep) out.class_ids.push_back(data.class_ids.empty() ? k : data.class_ids[static_cast<std::size_t>(k)]);
  } else {
    out.class_ids = data.class_ids;
  }

  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int y = data.labels[i];
    const bool kept = y != data.unknown_label() && compact[static_cast<std::size_t>(y)] != -1;
    if (kept || excluded == Excluded::MarkUnknown) rows.push_back(i);
  }
  if (rows.empty()) throw ConfigError("subset_classes: no samples left");
  out.features = data.features.gather_rows(rows);
  for (auto i : rows) {
    const int y = data.labels[i];
    const bool kept = y != data.unknown_label() && compact[static_cast<std::size_t>(y)] != -1;
    out.labels.push_back(kept ? compact[static_cast<std::size_t>(y)] : static_cast<int>(out.num_classes));
    out.domain.push_back(data.domain[i]);
  }
  return out;
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size, std::uint64_t seed, int epoch,
                                              BatchMode mode) {
  if (batch_size < 2) throw ConfigError("batches: batch_size must be >= 2");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    if (mode == BatchMode::Train && end - start < batch_size) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& csv) {
  auto p = csv;
  p += ".json";
  return p;
}

template <typename T>
T parse_field(std::string_view s, std::size_t line) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw IoError("dataset csv: bad field '" + std::string(s) + "' on line " + std::to_string(line));
  }
  return v;
}

}  // namespace

void save_dataset(const Dataset& data, const std::filesystem::path& csv, const nlohmann::json& generator) {
  validate(data);
  std::ofstream out(csv);
  if (!out) throw IoError("save_dataset: cannot write " + csv.string());
  for (std::size_t j = 0; j < data.dim(); ++j) out << 'x' << j << ',';
  out << "label,domain_tag\n";
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.features.row(i)) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out.write(buf, end - buf);
      out << ',';
    }
    out << data.labels[i] << ',' << data.domain[i] << '\n';
  }
  if (!out) throw IoError("save_dataset: write failed for " + csv.string());

  nlohmann::json meta{{"num_classes", data.num_classes},
                      {"dim", data.dim()},
                      {"size", data.size()},
                      {"class_ids", data.class_ids},
                      {"generator", generator.is_null() ? nlohmann::json::object() : generator}};
  std::ofstream side(sidecar_path(csv));
  if (!side) throw IoError("save_dataset: cannot write sidecar for " + csv.string());
  side << meta.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& csv) {
  std::ifstream side(sidecar_path(csv));
  if (!side) throw IoError("load_dataset: missing sidecar " + sidecar_path(csv).string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(side);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("load_dataset: bad sidecar: ") + e.what());
  }

  std::ifstream in(csv);
  if (!in) throw IoError("load_dataset: cannot read " + csv.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("load_dataset: empty file " + csv.string());
  const auto header_fields = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (header_fields < 3) throw IoError("load_dataset: header needs feature, label and domain_tag columns");
  const std::size_t d = header_fields - 2;

  Dataset out;
  out.num_classes = meta.at("num_classes").get<std::size_t>();
  out.class_ids = meta.value("class_ids", std::vector<int>{});
  std::vector<double> values;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      auto pos = rest.find(',');
      fields.push_back(rest.substr(0, pos));
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 1);
    }
    if (fields.size() != header_fields) throw IoError("load_dataset: wrong field count on line " + std::to_string(lineno));
    for (std::size_t j = 0; j < d; ++j) values.push_back(parse_field<double>(fields[j], lineno));
    out.labels.push_back(parse_field<int>(fields[d], lineno));
    out.domain.push_back(parse_field<int>(fields[d + 1], lineno));
  }
  if (out.labels.empty()) throw IoError("load_dataset: no rows in " + csv.string());
  out.features = Tensor({out.labels.size(), d}, std::move(values));
  validate(out);
  return out;
}

}  // namespace shot
