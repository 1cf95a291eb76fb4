#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "qsel");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = qsel::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("qsel_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  // Tiny model on a short synthetic series.
  std::string write_config() {
    const auto data = (dir / "series.csv").string();
    EXPECT_EQ(run({"gen-synthetic", "--length", "240", "--output", data}).code, 0);
    const auto cfg = dir / "run.cfg";
    std::ofstream(cfg) << "data = " << data << "\n"
                       << "hidden_size = 8\nembedding_size = 4\nencoder_layers = 1\ndecoder_layers = 1\n"
                       << "heads = 2\nbatch_size = 4\ndropout = 0\niterations = 1\nfactor = 0.5\n"
                       << "input_len = 16\nlabel_len = 8\npred_len = 4\nallow_out_of_range = true\n"
                       << "max_train_windows = 8\nmax_eval_windows = 4\n";
    return cfg.string();
  }

  fs::path dir;
};

}  // namespace

TEST_F(CliTest, HelpExitsZero) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({"train", "--help"}).code, 0);
}

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"train", "--no-such-flag"}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"eval"}).code, 1);  // --checkpoint is required
}

TEST_F(CliTest, DataErrorsExitTwo) {
  const auto r = run({"train", "--data", (dir / "missing.csv").string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u) << r.err;
  EXPECT_EQ(run({"gen-synthetic", "--period", "1"}).code, 2);
}

TEST_F(CliTest, TrainEvalForecastWorkflow) {
  const auto cfg = write_config();
  const auto out = (dir / "run").string();
  const auto t = run({"train", "--config", cfg, "--out", out});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(t.out.find("mse "), std::string::npos);
  for (const char* f : {"best", "history.csv", "metrics.json"}) EXPECT_TRUE(fs::exists(fs::path(out) / f)) << f;

  const auto metrics = nlohmann::json::parse(slurp(fs::path(out) / "metrics.json"));
  const auto e = run({"eval", "--checkpoint", out + "/best", "--split", "test"});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto j = nlohmann::json::parse(e.out);
  // The checkpoint holds the best weights, so eval reproduces the train-time test score.
  EXPECT_DOUBLE_EQ(j.at("mse").get<double>(), metrics.at("test").at("mse").get<double>());

  const auto f = run({"forecast", "--checkpoint", out + "/best"});
  ASSERT_EQ(f.code, 0) << f.err;
  std::istringstream lines(f.out);
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) ++n;
  EXPECT_EQ(n, 5u);  // header + pred_len rows
}

TEST_F(CliTest, FlagOverridesConfigWithNotice) {
  const auto cfg = write_config();
  const auto r = run({"train", "--config", cfg, "--out", (dir / "o").string(), "--iterations", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("notice: --iterations overrides the config value of iterations"), std::string::npos);
  EXPECT_NE(r.err.find("epoch 2"), std::string::npos);
}

TEST_F(CliTest, InvalidConfigValueExitsTwo) {
  const auto cfg = write_config();
  const auto r = run({"train", "--config", cfg, "--out", (dir / "o").string(), "--heads", "3"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("heads"), std::string::npos) << r.err;
}

TEST_F(CliTest, NextActivityOnSyntheticLog) {
  const auto r = run({"next-activity", "--synthetic-traces", "20", "--hidden-size", "8", "--embedding-size", "4",
                      "--encoder-layers", "1", "--heads", "2", "--iterations", "1", "--allow-out-of-range", "true"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("traces").get<int>(), 20);
  EXPECT_EQ(j.at("classes").get<int>(), 4);
  EXPECT_EQ(j.at("train_samples").get<int>(), 48);
  EXPECT_EQ(j.at("test_samples").get<int>(), 12);
}

TEST_F(CliTest, BenchPrintsCsv) {
  const auto r = run({"bench", "--len", "32", "--factor", "0.5", "--dim", "8", "--reps", "2", "--warmup", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("length,dim,factor,selected,full_ms,selector_ms,ratio\n", 0), 0u);
}
