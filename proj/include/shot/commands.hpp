#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "shot/config.hpp"
#include "shot/report.hpp"

namespace shot {

struct GlobalOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;  // overrides adapt.seed
  std::filesystem::path out = ".";
  std::vector<std::string> overrides;
};

RunConfig resolve_config(const GlobalOptions& opts);

// Writes source.csv and target.csv (plus source_<i>.csv / target_<i>.csv for
// the extra rotations) with JSON sidecars. Needs a [data] section.
void cmd_gen_data(const GlobalOptions& opts);

// Trains on `source_csv` and writes model.json and a report. With `target_csv`
// the source-only target scores are added as the baseline.
RunReport cmd_train_source(const GlobalOptions& opts, const std::filesystem::path& source_csv,
                           const std::optional<std::filesystem::path>& target_csv = std::nullopt);

// Adapts each model to `target_csv` independently. Target labels are read only
// to score the result. Several models give summed-softmax predictions.
RunReport cmd_adapt(const GlobalOptions& opts, const std::vector<std::filesystem::path>& models,
                    const std::filesystem::path& target_csv);

RunReport cmd_evaluate(const GlobalOptions& opts, const std::vector<std::filesystem::path>& models,
                       const std::filesystem::path& data_csv);

struct SuiteResult {
  std::vector<SummaryRow> summary;
  std::vector<std::string> failures;  // "name seed: message"
};

// Runs suite.grid over suite.seeds, each run writing runs/<name>/seed_<s>/,
// then aggregates from those files into summary.csv. Failed runs are listed
// in failures.csv and do not stop the suite. SHOT_ADAPT_THREADS bounds the
// number of concurrent runs (default 1).
SuiteResult cmd_suite(const GlobalOptions& opts);

// Parses argv and dispatches. Exit codes: 0 success, 1 configuration error,
// 2 runtime or numeric error.
int run_cli(int argc, char** argv);

}  // namespace shot
