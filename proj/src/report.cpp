#include "shot/report.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>

#include "json.hpp"
#include "shot/error.hpp"
#include "shot/metrics.hpp"

namespace shot {

namespace {

using nlohmann::json;

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("emit_report: cannot write " + path.string());
  return out;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_report: cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("load_report: bad json in " + path.string() + ": " + e.what());
  }
}

}  // namespace

TraceRow trace_row(const EpochLog& e) {
  TraceRow row{{"epoch", static_cast<double>(e.epoch)}, {"lr", e.lr},     {"loss", e.loss},
               {"L_ent", e.ent},                        {"L_div", e.div}, {"L_pl", e.pl}};
  if (e.train_acc) row["train_acc"] = *e.train_acc;
  if (e.pseudo_label_agreement) row["pseudo_label_agreement"] = *e.pseudo_label_agreement;
  if (e.pseudo_label_acc) row["pseudo_label_acc"] = *e.pseudo_label_acc;
  if (e.rejection_rate) row["rejection_rate"] = *e.rejection_rate;
  return row;
}

TraceRow trace_row(const SourceEpoch& e) {
  return {{"epoch", static_cast<double>(e.epoch)}, {"lr", e.lr},           {"loss", e.loss},
          {"train_acc", e.train_acc},              {"val_acc", e.val_acc}, {"val_loss", e.val_loss}};
}

double round_sig6(double v) {
  if (!std::isfinite(v)) throw NumericError("report: non-finite value");
  return std::strtod(fmt6(v).c_str(), nullptr);
}

RunReport rounded(RunReport report) {
  for (auto& row : report.loss_trace)
    for (auto& [k, v] : row) v = round_sig6(v);
  for (auto& [k, v] : report.metrics) v = round_sig6(v);
  if (report.projection) {
    auto& pts = report.projection->points;
    for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = round_sig6(pts[i]);
  }
  report.wall_seconds = round_sig6(report.wall_seconds);
  return report;
}

void validate(const RunReport& report) {
  if (report.metrics.empty()) throw ConfigError("report: no metrics");
  const bool open = report.scenario == Scenario::Open;
  for (const char* key : {"os", "os_star", "unknown_acc"}) {
    if (!open && report.metrics.contains(key)) {
      throw ConfigError(std::string("report: metric '") + key + "' only applies to open set");
    }
  }
  if (open && report.stage != "source" && !report.metrics.contains("os")) {
    throw ConfigError("report: open-set report without os");
  }
  if (report.projection && report.projection->points.rows() != report.projection->labels.size()) {
    throw ConfigError("report: projection labels do not match points");
  }
}

void emit_report(const RunReport& report, const std::filesystem::path& dir) {
  validate(report);
  const RunReport r = rounded(report);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("emit_report: cannot create " + dir.string() + ": " + ec.message());

  json j;
  j["name"] = r.name;
  j["stage"] = r.stage;
  j["config_hash"] = r.config_hash;
  j["seed"] = r.seed;
  j["scenario"] = to_string(r.scenario);
  j["metrics"] = r.metrics;
  j["info"] = r.info;
  j["loss_trace"] = r.loss_trace;
  j["has_projection"] = r.projection.has_value();
  open_out(dir / "report.json") << j.dump(2) << '\n';
  open_out(dir / "timing.json") << json{{"wall_seconds", r.wall_seconds}}.dump(2) << '\n';

  {
    auto out = open_out(dir / "metrics.csv");
    out << "metric,value\n";
    for (const auto& [k, v] : r.metrics) out << k << ',' << fmt6(v) << '\n';
  }
  {
    std::set<std::string> columns;
    for (const auto& row : r.loss_trace)
      for (const auto& [k, v] : row) columns.insert(k);
    columns.erase("epoch");
    auto out = open_out(dir / "loss_trace.csv");
    out << "epoch";
    for (const auto& c : columns) out << ',' << c;
    out << '\n';
    for (const auto& row : r.loss_trace) {
      out << (row.contains("epoch") ? fmt6(row.at("epoch")) : "");
      for (const auto& c : columns) {
        out << ',';
        if (auto it = row.find(c); it != row.end()) out << fmt6(it->second);
      }
      out << '\n';
    }
  }
  if (r.projection) {
    auto out = open_out(dir / "projection.csv");
    out << "pc1,pc2,label\n";
    const auto& p = *r.projection;
    for (std::size_t i = 0; i < p.points.rows(); ++i) {
      out << fmt6(p.points(i, 0)) << ',' << fmt6(p.points(i, 1)) << ',' << p.labels[i] << '\n';
    }
  }
}

RunReport load_report(const std::filesystem::path& dir) {
  const json j = read_json(dir / "report.json");
  RunReport r;
  try {
    r.name = j.at("name").get<std::string>();
    r.stage = j.at("stage").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.scenario = parse_scenario(j.at("scenario").get<std::string>());
    r.metrics = j.at("metrics").get<std::map<std::string, double>>();
    r.info = j.at("info").get<std::map<std::string, std::string>>();
    r.loss_trace = j.at("loss_trace").get<std::vector<TraceRow>>();
    if (j.at("has_projection").get<bool>()) {
      std::ifstream in(dir / "projection.csv");
      if (!in) throw IoError("load_report: missing projection.csv in " + dir.string());
      std::string line;
      std::getline(in, line);
      std::vector<double> values;
      Projection p;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        double x = 0, y = 0;
        int label = 0;
        if (std::sscanf(line.c_str(), "%lf,%lf,%d", &x, &y, &label) != 3) {
          throw IoError("load_report: bad projection row '" + line + "'");
        }
        values.push_back(x);
        values.push_back(y);
        p.labels.push_back(label);
      }
      if (p.labels.empty()) throw IoError("load_report: empty projection.csv");
      p.points = Tensor({p.labels.size(), std::size_t{2}}, std::move(values));
      r.projection = std::move(p);
    }
  } catch (const json::exception& e) {
    throw IoError("load_report: malformed report in " + dir.string() + ": " + e.what());
  }
  if (std::filesystem::exists(dir / "timing.json")) {
    r.wall_seconds = read_json(dir / "timing.json").value("wall_seconds", 0.0);
  }
  validate(r);
  return r;
}

std::map<std::string, double> score(std::span<const int> preds, std::span<const int> labels, std::size_t num_known,
                                    Scenario scenario) {
  std::map<std::string, double> out;
  if (scenario == Scenario::Open) {
    const auto s = os_scores(preds, labels, num_known);
    out["os"] = s.os;
    out["os_star"] = s.os_star;
    if (s.unknown_acc) out["unknown_acc"] = *s.unknown_acc;
    out["all_classes_present"] = s.all_classes_present ? 1.0 : 0.0;
    out["accuracy"] = accuracy(preds, labels);
    auto per = per_class_accuracy(preds, labels, num_known + 1);
    for (std::size_t k = 0; k < num_known; ++k) {
      if (per[k]) out["acc_class_" + std::to_string(k)] = *per[k];
    }
    return out;
  }
  out["accuracy"] = accuracy(preds, labels);
  auto per = per_class_accuracy(preds, labels, num_known);
  std::vector<bool> present(num_known, false);
  for (std::size_t k = 0; k < num_known; ++k) {
    if (per[k]) {
      out["acc_class_" + std::to_string(k)] = *per[k];
      present[k] = true;
    }
  }
  if (scenario == Scenario::Partial) {
    std::size_t absent = 0;
    for (int p : preds) absent += p >= 0 && static_cast<std::size_t>(p) < num_known && !present[static_cast<std::size_t>(p)];
    out["absent_class_rate"] = static_cast<double>(absent) / static_cast<double>(preds.size());
  }
  return out;
}

std::vector<SummaryRow> summarize(std::span<const RunReport> reports) {
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  for (const auto& r : reports)
    for (const auto& [k, v] : r.metrics) groups[{r.name, k}].push_back(v);
  std::vector<SummaryRow> rows;
  for (const auto& [key, values] : groups) {
    SummaryRow row{key.first, key.second, 0.0, 0.0, values.size()};
    for (double v : values) row.mean += v;
    row.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - row.mean) * (v - row.mean);
      row.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    rows.push_back(row);
  }
  return rows;
}

void write_summary(std::span<const SummaryRow> rows, const std::filesystem::path& csv) {
  auto out = open_out(csv);
  out << "name,metric,mean,std,runs\n";
  for (const auto& r : rows) out << r.name << ',' << r.metric << ',' << fmt6(r.mean) << ',' << fmt6(r.std) << ',' << r.runs << '\n';
}

}  // namespace shot
