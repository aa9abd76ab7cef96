#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shot/adapt.hpp"
#include "shot/tensor.hpp"

namespace shot {

using TraceRow = std::map<std::string, double>;

TraceRow trace_row(const EpochLog& e);
TraceRow trace_row(const SourceEpoch& e);

struct Projection {
  Tensor points;  // n x 2
  std::vector<int> labels;

  friend bool operator==(const Projection&, const Projection&) = default;
};

struct RunReport {
  std::string name;  // run label, used to group suite rows
  std::string stage;  // "source", "adapt" or "evaluate"
  std::string config_hash;
  std::uint64_t seed = 0;
  Scenario scenario = Scenario::Closed;
  std::vector<TraceRow> loss_trace;
  std::map<std::string, double> metrics;
  std::map<std::string, std::string> info;  // model hashes, input files
  std::optional<Projection> projection;
  double wall_seconds = 0.0;  // written to timing.json, not report.json

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

// Value rounded to 6 significant digits, as written to every output file.
double round_sig6(double v);
// Copy with every stored float rounded the way emit_report writes it.
RunReport rounded(RunReport report);

// Throws ConfigError if metrics are empty or disagree with the scenario
// (os / os_star / unknown_acc only for open set).
void validate(const RunReport& report);

// Writes report.json, metrics.csv, loss_trace.csv, timing.json and, when
// present, projection.csv into `dir` (created if missing).
void emit_report(const RunReport& report, const std::filesystem::path& dir);
RunReport load_report(const std::filesystem::path& dir);

// Closed / partial: accuracy and per-class accuracy (acc_class_<k>).
// Open: os, os_star, unknown_acc and per-class accuracy over K + 1 classes.
std::map<std::string, double> score(std::span<const int> preds, std::span<const int> labels, std::size_t num_known,
                                    Scenario scenario);

struct SummaryRow {
  std::string name;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single run
  std::size_t runs = 0;
};

// Mean and standard deviation of each metric over the reports sharing a name.
std::vector<SummaryRow> summarize(std::span<const RunReport> reports);
void write_summary(std::span<const SummaryRow> rows, const std::filesystem::path& csv);

}  // namespace shot
