#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "shot/config.hpp"
#include "shot/error.hpp"
#include "shot/report.hpp"

namespace shot {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("shot_report_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunReport sample_report() {
  RunReport r;
  r.name = "shot";
  r.stage = "adapt";
  r.config_hash = "abc";
  r.seed = 2019;
  r.scenario = Scenario::Closed;
  r.metrics = {{"accuracy", 0.912345678}, {"acc_class_0", 1.0}};
  r.info = {{"model_hash", "ff"}};
  r.loss_trace = {{{"epoch", 0}, {"loss", -0.123456789}, {"L_ent", 0.5}},
                  {{"epoch", 1}, {"loss", -0.2}, {"L_ent", 0.4}, {"train_acc", 0.75}}};
  std::mt19937_64 rng(1);
  r.projection = Projection{testing::random_normal(5, 2, rng), {0, 1, 2, 3, 0}};
  r.wall_seconds = 0.0123456789;
  return r;
}

TEST(Report, RoundTripEqualsRoundedReport) {
  const auto dir = scratch("roundtrip");
  const RunReport r = sample_report();
  emit_report(r, dir);
  EXPECT_EQ(load_report(dir), rounded(r));
  for (const char* f : {"report.json", "metrics.csv", "loss_trace.csv", "projection.csv", "timing.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(slurp(dir / "metrics.csv"), "metric,value\nacc_class_0,1\naccuracy,0.912346\n");
  const std::string trace = slurp(dir / "loss_trace.csv");
  EXPECT_EQ(trace.substr(0, trace.find('\n')), "epoch,L_ent,loss,train_acc");
  fs::remove_all(dir);
}

TEST(Report, EmissionIsStable) {
  const auto a = scratch("stable_a"), b = scratch("stable_b");
  emit_report(sample_report(), a);
  emit_report(sample_report(), b);
  EXPECT_EQ(slurp(a / "report.json"), slurp(b / "report.json"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Report, EmptyMetricsRejected) {
  RunReport r = sample_report();
  r.metrics.clear();
  EXPECT_THROW(emit_report(r, scratch("empty")), ConfigError);
}

TEST(Report, OpenSetMetricsOnlyForOpenScenario) {
  RunReport r = sample_report();
  r.metrics["os"] = 0.5;
  EXPECT_THROW(validate(r), ConfigError);
  r.scenario = Scenario::Open;
  EXPECT_NO_THROW(validate(r));
  r.metrics.erase("os");
  EXPECT_THROW(validate(r), ConfigError);
}

TEST(Report, UnwritablePathRejected) {
  const auto file = fs::temp_directory_path() / "shot_report_blocker";
  std::ofstream(file) << "x";
  EXPECT_THROW(emit_report(sample_report(), file / "sub"), IoError);
  fs::remove(file);
}

TEST(Score, ScenarioSpecificMetrics) {
  const std::vector<int> y{0, 0, 1, 1};
  const std::vector<int> p{0, 2, 1, 1};
  const auto partial = score(p, y, 4, Scenario::Partial);
  EXPECT_DOUBLE_EQ(partial.at("accuracy"), 0.75);
  EXPECT_DOUBLE_EQ(partial.at("absent_class_rate"), 0.25);
  EXPECT_FALSE(partial.contains("acc_class_2"));
  const auto closed = score(p, y, 4, Scenario::Closed);
  EXPECT_FALSE(closed.contains("absent_class_rate"));
  const std::vector<int> yo{0, 1, 2, 2};
  const auto open = score(std::vector<int>{0, 1, 2, 0}, yo, 2, Scenario::Open);
  EXPECT_DOUBLE_EQ(open.at("os"), 2.5 / 3.0);
  EXPECT_DOUBLE_EQ(open.at("unknown_acc"), 0.5);
}

TEST(Summary, MeanAndSampleStd) {
  std::vector<RunReport> reports(3, sample_report());
  reports[0].metrics["accuracy"] = 0.8;
  reports[1].metrics["accuracy"] = 0.9;
  reports[2].metrics["accuracy"] = 1.0;
  const auto rows = summarize(reports);
  const auto it = std::find_if(rows.begin(), rows.end(), [](const SummaryRow& r) { return r.metric == "accuracy"; });
  ASSERT_NE(it, rows.end());
  EXPECT_NEAR(it->mean, 0.9, 1e-12);
  EXPECT_NEAR(it->std, 0.1, 1e-12);
  EXPECT_EQ(it->runs, 3u);
  const auto one = summarize(std::span(reports).first(1));
  EXPECT_EQ(one.front().std, 0.0);
}

TEST(Config, DefaultsAndOverrides) {
  const RunConfig def = load_config(std::nullopt);
  EXPECT_EQ(def.adapt.beta, 0.3);
  EXPECT_EQ(def.task.target_shift.rotation_deg, 35.0);
  const RunConfig cfg = load_config(std::nullopt, {"adapt.beta=0", "adapt.scenario=open", "suite.seeds=1,2"});
  EXPECT_EQ(cfg.adapt.beta, 0.0);
  EXPECT_EQ(cfg.adapt.scenario, Scenario::Open);
  EXPECT_EQ(cfg.task.target_shift.rotation_deg, preset_task(Scenario::Open).target_shift.rotation_deg);
  EXPECT_EQ(cfg.suite.seeds, (std::vector<std::uint64_t>{1, 2}));
  const RunConfig custom = load_config(std::nullopt, {"adapt.scenario=open", "data.target_rotation_deg=50"});
  EXPECT_EQ(custom.task.target_shift.rotation_deg, 50.0);
}

TEST(Config, UnknownKeysAndBadValuesRejected) {
  EXPECT_THROW(load_config(std::nullopt, {"adapt.betta=0"}), ConfigError);
  EXPECT_THROW(load_config(std::nullopt, {"nosection=1"}), ConfigError);
  EXPECT_THROW(load_config(std::nullopt, {"adapt.beta=zero"}), ConfigError);
  EXPECT_THROW(load_config(std::nullopt, {"adapt.beta=-1"}), ConfigError);
  const auto ini = fs::temp_directory_path() / "shot_bad.ini";
  std::ofstream(ini) << "[adapt]\nbeta = 0.1\n[mystery]\nx = 1\n";
  EXPECT_THROW(load_config(ini), ConfigError);
  fs::remove(ini);
}

TEST(Config, IniFileThenOverrides) {
  const auto ini = fs::temp_directory_path() / "shot_good.ini";
  std::ofstream(ini) << "[data]\nn_per_class = 50\n[adapt]\nbeta = 0.1\ninclude_div = auto\n";
  const RunConfig cfg = load_config(ini, {"adapt.beta=0.2"});
  EXPECT_EQ(cfg.task.blobs.n_per_class, 50u);
  EXPECT_EQ(cfg.adapt.beta, 0.2);
  EXPECT_FALSE(cfg.adapt.include_div.has_value());
  EXPECT_TRUE(cfg.sections.contains("data"));
  fs::remove(ini);
}

TEST(Config, HashIgnoresSeedAndTracksEverythingElse) {
  const auto base = config_hash(load_config(std::nullopt));
  EXPECT_EQ(base.size(), 64u);
  EXPECT_EQ(config_hash(load_config(std::nullopt, {"adapt.seed=5"})), base);
  EXPECT_NE(config_hash(load_config(std::nullopt, {"adapt.beta=0"})), base);
  for (const auto& key : config_keys()) {
    if (key == "adapt.seed") continue;
    EXPECT_NE(canonical_text(load_config(std::nullopt)).find(key + "="), std::string::npos) << key;
  }
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}  // namespace
}  // namespace shot
