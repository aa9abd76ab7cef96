#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "shot/commands.hpp"
#include "shot/config.hpp"
#include "shot/error.hpp"
#include "shot/report.hpp"

namespace shot {
namespace {

namespace fs = std::filesystem;

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "shot_cli");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("shot_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    ini_ = root_ / "task.ini";
    std::ofstream(ini_) << "[data]\nn_per_class = 100\n[source]\nepochs = 10\n[adapt]\nepochs = 5\n";
  }
  void TearDown() override { fs::remove_all(root_); }

  std::string p(const std::string& rel) const { return (root_ / rel).string(); }

  fs::path root_;
  fs::path ini_;
};

TEST_F(Cli, FullPipeline) {
  ASSERT_EQ(run({"--config", ini_.string(), "--out", p("data"), "gen-data"}), 0);
  EXPECT_TRUE(fs::exists(root_ / "data/source.csv.json"));
  ASSERT_EQ(run({"--config", ini_.string(), "--out", p("src"), "train-source", "--data", p("data/source.csv"), "--target",
                 p("data/target.csv")}),
            0);
  const RunReport src = load_report(root_ / "src");
  EXPECT_TRUE(src.metrics.contains("val_acc"));
  EXPECT_TRUE(src.metrics.contains("accuracy"));
  ASSERT_EQ(run({"--config", ini_.string(), "--out", p("a1"), "adapt", "--model", p("src/model.json"), "--data",
                 p("data/target.csv")}),
            0);
  ASSERT_EQ(run({"--config", ini_.string(), "--out", p("a2"), "adapt", "--model", p("src/model.json"), "--data",
                 p("data/target.csv")}),
            0);
  EXPECT_EQ(slurp(root_ / "a1/report.json"), slurp(root_ / "a2/report.json"));
  EXPECT_EQ(slurp(root_ / "a1/model.json"), slurp(root_ / "a2/model.json"));
  EXPECT_TRUE(fs::exists(root_ / "a1/epochs.jsonl"));
  EXPECT_TRUE(fs::exists(root_ / "a1/predictions.csv"));
  EXPECT_EQ(load_report(root_ / "a1").config_hash, config_hash(load_config(ini_)));
  ASSERT_EQ(run({"--out", p("ev"), "evaluate", "--model", p("a1/model.json"), "--data", p("data/target.csv")}), 0);
  EXPECT_TRUE(load_report(root_ / "ev").metrics.contains("accuracy"));
}

TEST_F(Cli, SourceModelHashStableAcrossReruns) {
  ASSERT_EQ(run({"--config", ini_.string(), "--out", p("data"), "gen-data"}), 0);
  ASSERT_EQ(run({"--config", ini_.string(), "--out", p("s1"), "train-source", "--data", p("data/source.csv")}), 0);
  ASSERT_EQ(run({"--config", ini_.string(), "--out", p("s2"), "train-source", "--data", p("data/source.csv")}), 0);
  EXPECT_EQ(load_report(root_ / "s1").info.at("model_hash"), load_report(root_ / "s2").info.at("model_hash"));
}

TEST_F(Cli, AdaptHasNoSourceDataOption) {
  ASSERT_EQ(run({"--config", ini_.string(), "--out", p("data"), "gen-data"}), 0);
  ASSERT_EQ(run({"--config", ini_.string(), "--out", p("src"), "train-source", "--data", p("data/source.csv")}), 0);
  EXPECT_EQ(run({"--out", p("a"), "adapt", "--model", p("src/model.json"), "--data", p("data/target.csv"), "--source",
                 p("data/source.csv")}),
            1);
  EXPECT_FALSE(fs::exists(root_ / "a/report.json"));
}

TEST_F(Cli, MultiSourceEnsemble) {
  std::ofstream(root_ / "multi.ini") << "[data]\nn_per_class = 100\nextra_source_rotations = 70\n[source]\nepochs = 10\n"
                                        "[adapt]\nepochs = 5\n";
  const std::string cfg = p("multi.ini");
  ASSERT_EQ(run({"--config", cfg, "--out", p("data"), "gen-data"}), 0);
  ASSERT_TRUE(fs::exists(root_ / "data/source_1.csv"));
  ASSERT_EQ(run({"--config", cfg, "--out", p("s0"), "train-source", "--data", p("data/source.csv")}), 0);
  ASSERT_EQ(run({"--config", cfg, "--out", p("s1"), "train-source", "--data", p("data/source_1.csv")}), 0);
  ASSERT_EQ(run({"--config", cfg, "--out", p("a"), "adapt", "--model", p("s0/model.json"), "--model",
                 p("s1/model.json"), "--data", p("data/target.csv")}),
            0);
  const RunReport r = load_report(root_ / "a");
  EXPECT_TRUE(r.metrics.contains("model_0_accuracy"));
  EXPECT_TRUE(r.metrics.contains("model_1_accuracy"));
  EXPECT_TRUE(fs::exists(root_ / "a/model_1.json"));
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run({"--help"}), 0);
  EXPECT_EQ(run({}), 1);
  EXPECT_EQ(run({"--override", "adapt.nope=1", "--out", p("x"), "gen-data"}), 1);
  // gen-data without a [data] section is a configuration error.
  std::ofstream(root_ / "nodata.ini") << "[adapt]\nbeta = 0\n";
  EXPECT_EQ(run({"--config", p("nodata.ini"), "--out", p("x"), "gen-data"}), 1);
  // Missing file fails argument validation.
  EXPECT_EQ(run({"evaluate", "--model", p("missing.json"), "--data", p("missing.csv")}), 1);
  // A corrupt model is a runtime error.
  std::ofstream(root_ / "bad.json") << "{";
  ASSERT_EQ(run({"--config", ini_.string(), "--out", p("data"), "gen-data"}), 0);
  EXPECT_EQ(run({"evaluate", "--model", p("bad.json"), "--data", p("data/target.csv")}), 2);
}

TEST_F(Cli, OpenSetPipeline) {
  std::ofstream(root_ / "open.ini") << "[data]\nn_per_class = 100\n[source]\nepochs = 10\n[adapt]\nscenario = open\n"
                                       "epochs = 5\n";
  const std::string cfg = p("open.ini");
  ASSERT_EQ(run({"--config", cfg, "--out", p("data"), "gen-data"}), 0);
  ASSERT_EQ(run({"--config", cfg, "--out", p("src"), "train-source", "--data", p("data/source.csv")}), 0);
  ASSERT_EQ(run({"--config", cfg, "--out", p("a"), "adapt", "--model", p("src/model.json"), "--data", p("data/target.csv")}),
            0);
  const RunReport r = load_report(root_ / "a");
  EXPECT_TRUE(r.metrics.contains("os"));
  EXPECT_TRUE(r.metrics.contains("rejection_rate"));
  // The same target under a closed config carries unknown labels and is refused.
  EXPECT_EQ(run({"--config", ini_.string(), "--out", p("b"), "adapt", "--model", p("src/model.json"), "--data",
                 p("data/target.csv")}),
            1);
}

TEST_F(Cli, SuiteAggregatesOverSeeds) {
  ASSERT_EQ(run({"--config", ini_.string(), "--override", "suite.seeds=2019,2020", "--out", p("suite"), "suite"}), 0);
  const std::string summary = slurp(root_ / "suite/summary.csv");
  EXPECT_EQ(summary.substr(0, summary.find('\n')), "name,metric,mean,std,runs");
  for (const char* name : {"source_only", "ent", "ent_div", "ent_div_naive_pl", "ent_div_self_pl"}) {
    EXPECT_NE(summary.find(std::string(name) + ",accuracy,"), std::string::npos) << name;
    EXPECT_TRUE(fs::exists(root_ / "suite/runs" / name / "seed_2020/report.json")) << name;
  }
  EXPECT_EQ(slurp(root_ / "suite/failures.csv"), "failure\n");
}

}  // namespace
}  // namespace shot
