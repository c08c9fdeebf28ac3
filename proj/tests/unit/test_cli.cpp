#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
  json summary() const { return json::parse(out); }
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = headfuse::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("headfuse_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string slurp(const std::string& p) const {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  }
  void write(const std::string& name, const json& j) const { std::ofstream(path(name)) << j.dump(); }

  fs::path dir_;
};

const json kSmallScenario = {{"object_count", 6}, {"occluder_count", 3}, {"frames", 1}};

}  // namespace

TEST_F(CliTest, HelpExitsZero) {
  const Outcome o = run({"--help"});
  EXPECT_EQ(o.code, 0);
  EXPECT_NE(o.out.find("simulate"), std::string::npos);
  EXPECT_EQ(run({"eval", "--help"}).code, 0);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"eval", "--scenes", "many"}).code, 2);
  EXPECT_EQ(run({"eval", "--no-such-flag"}).code, 2);
}

TEST_F(CliTest, MissingConfigFileExitsTwo) {
  const Outcome o = run({"eval", "--config", path("missing.json"), "--output", path("out")});
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("missing.json"), std::string::npos);
}

TEST_F(CliTest, BadStrategyExitsTwo) {
  write("scenario.json", kSmallScenario);
  const Outcome o = run({"simulate", "--strategy", "magic", "--scenario", path("scenario.json"), "--output", path("out")});
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("magic"), std::string::npos);
  EXPECT_EQ(run({"simulate", "--strategy", "homo", "--output", path("out2")}).code, 2);
}

TEST_F(CliTest, SimulateIsDeterministic) {
  write("scenario.json", kSmallScenario);
  for (const char* name : {"a", "b"}) {
    const Outcome o = run({"simulate", "--seed", "5", "--scenes", "2", "--scenario", path("scenario.json"),
                           "--output", path(name)});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(o.summary()["status"], "ok");
    EXPECT_EQ(o.summary()["seed"], 5);
  }
  for (const char* file : {"scene_000.json", "scene_001.json", "result_000.json", "result_001.json"}) {
    EXPECT_EQ(slurp(path(std::string("a/") + file)), slurp(path(std::string("b/") + file))) << file;
  }
}

TEST_F(CliTest, NonEmptyOutputGetsTimestampedSibling) {
  fs::create_directories(path("busy"));
  std::ofstream(path("busy/keep.txt")) << "x";
  const Outcome o = run({"bandwidth", "--output", path("busy")});
  ASSERT_EQ(o.code, 0) << o.err;
  const std::string used = o.summary()["output"];
  EXPECT_NE(used, path("busy"));
  EXPECT_EQ(used.rfind(path("busy-"), 0), 0u);
  EXPECT_TRUE(fs::exists(path("busy/keep.txt")));
  const Outcome again = run({"bandwidth", "--output", path("busy"), "--overwrite"});
  EXPECT_EQ(again.summary()["output"], path("busy"));
}

TEST_F(CliTest, BandwidthRatio) {
  const Outcome o = run({"bandwidth", "--output", path("bw")});
  ASSERT_EQ(o.code, 0) << o.err;
  const json presets = o.summary()["presets"];
  ASSERT_EQ(presets.size(), 2u);
  for (const auto& p : presets) EXPECT_EQ(p["ratio"].get<double>(), 0.0625);
  EXPECT_TRUE(fs::exists(path("bw/bandwidth_v2v4real.csv")));
  EXPECT_TRUE(fs::exists(path("bw/bandwidth_opv2v.json")));
  EXPECT_EQ(run({"bandwidth", "--preset", "kitti", "--output", path("bw2")}).code, 2);
}

TEST_F(CliTest, EvalSingleStrategyOneRow) {
  write("scenario.json", kSmallScenario);
  const Outcome o = run({"eval", "--strategies", "none", "--scenes", "2", "--scenario", path("scenario.json"),
                         "--output", path("ev")});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(o.summary()["rows"].size(), 1u);
  const std::string csv = slurp(path("ev/comparison.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
}

TEST_F(CliTest, ConfigFileAndFlagPrecedence) {
  write("cfg.json", {{"scenes", 3}, {"strategies", "none"}, {"seed", 9}, {"scenario", kSmallScenario}});
  const Outcome from_file = run({"eval", "--config", path("cfg.json"), "--output", path("e1")});
  ASSERT_EQ(from_file.code, 0) << from_file.err;
  EXPECT_EQ(from_file.summary()["scenes"], 3);
  EXPECT_EQ(from_file.summary()["seed"], 9);
  const Outcome flags = run({"eval", "--config", path("cfg.json"), "--scenes", "1", "--seed", "4", "--output", path("e2")});
  ASSERT_EQ(flags.code, 0) << flags.err;
  EXPECT_EQ(flags.summary()["scenes"], 1);
  EXPECT_EQ(flags.summary()["seed"], 4);
}

TEST_F(CliTest, SeedFromEnvironment) {
  ::setenv("HEADFUSE_SEED", "777", 1);
  const Outcome o = run({"bandwidth", "--output", path("s1")});
  ::unsetenv("HEADFUSE_SEED");
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(o.summary()["seed"], 777);
  EXPECT_EQ(run({"bandwidth", "--output", path("s2")}).summary()["seed"], 42);
}

TEST_F(CliTest, ToyTrainingLowersLoss) {
  write("train.json", {{"scenes", 2}, {"epochs", 5}, {"scenario", {{"object_count", 6}, {"frames", 1},
                                                                    {"grid", {{"x_min", -16}, {"x_max", 16},
                                                                              {"y_min", -16}, {"y_max", 16},
                                                                              {"cell", 1}}},
                                                                    {"object_extent", 15},
                                                                    {"sender_min_distance", 8},
                                                                    {"sender_max_distance", 12}}}});
  const Outcome o = run({"train", "--config", path("train.json"), "--output", path("tr")});
  ASSERT_EQ(o.code, 0) << o.err;
  const json s = o.summary();
  EXPECT_LT(s["final_loss"].get<double>(), s["initial_loss"].get<double>());
  EXPECT_TRUE(fs::exists(path("tr/checkpoint.bin")));
  EXPECT_TRUE(fs::exists(path("tr/losses.csv")));

  write("scenario.json", kSmallScenario);
  const Outcome homo = run({"run", "--strategy", "homo", "--checkpoint", path("tr/checkpoint.bin"), "--scenario",
                            path("scenario.json"), "--output", path("run")});
  EXPECT_EQ(homo.code, 0) << homo.err;
  const Outcome missing = run({"run", "--strategy", "homo", "--checkpoint", path("nope.bin"), "--scenario",
                               path("scenario.json"), "--output", path("run2")});
  EXPECT_EQ(missing.code, 2);
}

TEST_F(CliTest, RunAndSweep) {
  write("scenario.json", kSmallScenario);
  const Outcome r = run({"run", "--strategy", "late", "--scenario", path("scenario.json"), "--output", path("r")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.summary()["strategy"], "late");
  EXPECT_TRUE(fs::exists(path("r/result.json")));
  const Outcome sw = run({"sweep", "--scenes", "3", "--output", path("sw")});
  ASSERT_EQ(sw.code, 0) << sw.err;
  EXPECT_TRUE(sw.summary()["monotone"].get<bool>());
  EXPECT_TRUE(fs::exists(path("sw/sweep.csv")));
}
