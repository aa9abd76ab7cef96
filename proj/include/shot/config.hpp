#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "shot/adapt.hpp"
#include "shot/model.hpp"
#include "shot/tasks.hpp"

namespace shot {

struct ReportOptions {
  bool projection = true;
  bool epoch_log = true;
  bool dump_pseudo_labels = false;
};

struct SuiteOptions {
  std::string grid = "ablation";  // ablation | toggles | tc_sweep
  std::vector<std::uint64_t> seeds{2019, 2020, 2021};
  std::vector<std::size_t> tc_values{0, 2, 5, 10};
};

// Everything one run needs. Keys are addressed as "section.key", e.g.
// "adapt.beta" or "data.target_rotation_deg".
struct RunConfig {
  TaskSpec task;
  // Extra domains for multi-source / multi-target runs: rotations applied on
  // top of the source (resp. target) shift.
  std::vector<double> extra_source_rotations;
  std::vector<double> extra_target_rotations;
  std::vector<std::size_t> hidden{64};
  std::size_t bottleneck = 16;
  ArchOptions arch;
  AdaptConfig adapt;
  ReportOptions report;
  SuiteOptions suite;
  std::set<std::string> sections;  // sections present in the source file

  ModelDims dims(std::size_t input_dim, std::size_t num_classes) const;
};

// Defaults, then the INI file (if any), then KEY=VALUE overrides. Unknown
// sections or keys throw ConfigError. An unset target shift follows the
// scenario preset.
RunConfig load_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides = {});

// One "section.key=value" line per key in a fixed order, seed excluded.
std::string canonical_text(const RunConfig& cfg);
// SHA-256 hex digest of canonical_text.
std::string config_hash(const RunConfig& cfg);

std::string sha256_hex(const std::string& bytes);
std::string file_sha256(const std::filesystem::path& path);

// All addressable keys, in canonical order.
std::vector<std::string> config_keys();

}  // namespace shot
