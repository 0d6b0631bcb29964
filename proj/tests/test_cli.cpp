#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "dreamaffect/cli.hpp"

using namespace dreamaffect;
namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("dreamaffect-cli-" + std::string(
        ::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    corpus = (dir / "corpus.jsonl").string();
    ASSERT_EQ(run({"synth", "--out", corpus, "--series-count", "3", "--reports-per-series", "10"}), 0);
  }
  void TearDown() override { fs::remove_all(dir); }

  static int run(std::vector<std::string> args) {
    args.insert(args.begin(), "--quiet");
    return cli::run(args);
  }

  static std::size_t lines(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string s; std::getline(in, s);) n += !s.empty();
    return n;
  }

  fs::path dir;
  std::string corpus;
};

}  // namespace

TEST_F(Cli, IngestNormalizes) {
  const auto out = dir / "norm.jsonl";
  EXPECT_EQ(run({"ingest", "--input", corpus, "--out", out.string()}), 0);
  EXPECT_EQ(lines(out), 30u);
}

TEST_F(Cli, KFoldWritesFoldsAndConfig) {
  const auto out = dir / "kfold";
  ASSERT_EQ(run({"eval", "kfold", "--corpus", corpus, "--k", "5", "--seed", "7", "--mode", "general",
                 "--out", out.string()}),
            0);
  for (int f = 0; f < 5; ++f) EXPECT_TRUE(fs::exists(out / "folds" / std::to_string(f) / "metrics.csv"));
  EXPECT_FALSE(fs::exists(out / "folds" / "5"));
  EXPECT_TRUE(fs::exists(out / "summary.csv"));
  ASSERT_TRUE(fs::exists(out / "config.json"));
  const auto cfg = nlohmann::json::parse(std::ifstream(out / "config.json"));
  EXPECT_EQ(cfg["k"], 5);
  EXPECT_EQ(cfg["train"]["seed"], 7);
}

TEST_F(Cli, TrainThenPredictOneRowPerReport) {
  const auto model = dir / "model";
  ASSERT_EQ(run({"train", "--corpus", corpus, "--out", model.string()}), 0);
  const auto unl = dir / "unlabelled.jsonl";
  ASSERT_EQ(run({"synth", "--out", unl.string(), "--seed", "5", "--series-count", "2",
                 "--reports-per-series", "7", "--unlabelled"}),
            0);
  const auto preds = dir / "preds.csv";
  const auto summary = dir / "summary.csv";
  ASSERT_EQ(run({"predict", "--model", model.string(), "--input", unl.string(), "--out",
                 preds.string(), "--summary", summary.string()}),
            0);
  EXPECT_EQ(lines(preds), 15u);  // header + 14
  EXPECT_TRUE(fs::exists(summary));
  EXPECT_EQ(run({"analyze", "distribution", "--input", preds.string(), "--corpus", corpus, "--out",
                 (dir / "dist.csv").string()}),
            0);
  EXPECT_EQ(lines(dir / "dist.csv"), 6u);
}

TEST_F(Cli, AblationThenSupportCorrelation) {
  const auto out = dir / "abl";
  ASSERT_EQ(run({"eval", "ablate", "--corpus", corpus, "--out", out.string()}), 0);
  EXPECT_EQ(lines(out / "ablation_summary.csv"), 4u);
  EXPECT_EQ(run({"analyze", "support-correlation", "--input", out.string(), "--out",
                 (dir / "supp.csv").string()}),
            0);
  EXPECT_EQ(lines(dir / "supp.csv"), 4u);
}

TEST_F(Cli, SentimentCorrelateWritesArtifacts) {
  const auto out = dir / "sent";
  ASSERT_EQ(run({"sentiment", "correlate", "--corpus", corpus, "--out", out.string()}), 0);
  for (const char* f : {"scores.csv", "correlation.csv", "config.json"}) EXPECT_TRUE(fs::exists(out / f)) << f;
}

TEST_F(Cli, ValidationErrorsExitOne) {
  EXPECT_EQ(run({"eval", "kfold", "--corpus", corpus, "--bogus-flag"}), cli::kExitValidation);
  EXPECT_EQ(run({"eval", "kfold", "--corpus", corpus, "--k", "1"}), cli::kExitValidation);
  EXPECT_EQ(run({"eval", "kfold", "--corpus", corpus, "--mode", "everyone"}), cli::kExitValidation);
  const auto bad = dir / "bad.jsonl";
  std::ofstream(bad) << "{\"id\":\"x\",\"series\":\"s\",\"text\":\"t\",\"mentions\":[{\"character\":\"D\",\"emotion\":\"ZZ\"}]}\n";
  EXPECT_EQ(run({"ingest", "--input", bad.string()}), cli::kExitValidation);
  EXPECT_EQ(run({"ingest", "--input", (dir / "missing.jsonl").string()}), cli::kExitValidation);
  // The default END_TO_END mode cannot fine-tune a frozen encoder.
  EXPECT_EQ(run({"train", "--corpus", corpus, "--out", (dir / "m").string(), "--encoder", "hashing"}),
            cli::kExitValidation);
}

TEST_F(Cli, BackendFailureExitsTwo) {
  EXPECT_EQ(run({"sentiment", "score", "--corpus", corpus, "--backend", "command:false", "--out",
                 (dir / "s.csv").string()}),
            cli::kExitRuntime);
}

// The installed binary, end to end through the shell.
TEST_F(Cli, BinaryExitCodes) {
  const std::string bin = DREAMAFFECT_CLI_PATH;
  auto status = [&](const std::string& args) {
    const int rc = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  };
  EXPECT_EQ(status("ingest --input " + corpus), 0);
  EXPECT_EQ(status("no-such-command"), 1);
  EXPECT_EQ(status("--help"), 0);
}
