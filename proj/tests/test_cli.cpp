#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "support.hpp"
#include "truncnet/cli/cli.hpp"
#include "truncnet/core/csv.hpp"
#include "truncnet/core/io.hpp"

using namespace truncnet;
using testsupport::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(const std::vector<std::string>& args) {
  testing::internal::CaptureStdout();
  testing::internal::CaptureStderr();
  const int code = run_cli(args);
  Outcome o{code, testing::internal::GetCapturedStdout(), testing::internal::GetCapturedStderr()};
  return o;
}

// A tiny dataset and one trained Toy run shared by the pipeline tests.
class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    const auto data = (dir_->path() / "data").string();
    ASSERT_EQ(run({"--log-level", "warn", "synth", "--out", data, "--n", "60", "--size", "16", "--tasks", "2", "--seed",
                   "1"}).code,
              kExitOk);
    const auto r = run(train_args(dir_->path() / "run"));
    ASSERT_EQ(r.code, kExitOk) << r.err;
  }
  static void TearDownTestSuite() { delete dir_; }

  static std::vector<std::string> train_args(const fs::path& out) {
    return {"--log-level", "warn", "train", "--out", out.string(), "--data", (dir_->path() / "data").string(),
            "--family", "toy", "--variant", "2x8", "--k", "1", "--image-size", "16", "--tasks",
            "No Finding,Atelectasis", "--lr", "0.003", "--batch-size", "8", "--epochs", "1", "--eval-every", "3",
            "--ensemble", "2", "--seed", "4"};
  }
  static fs::path path(const std::string& name) { return dir_->path() / name; }

  static TempDir* dir_;
};
TempDir* CliPipeline::dir_ = nullptr;

}  // namespace

TEST(Cli, HelpOnEveryCommandExitsZeroAndListsItsFlags) {
  const std::map<std::string, std::vector<std::string>> flags = {
      {"synth", {"--out", "--n", "--size", "--tasks", "--seed", "--contrast-min"}},
      {"train", {"--family", "--variant", "--k", "--pretrained", "--provider", "--image-size", "--lr", "--eval-every"}},
      {"eval", {"--run", "--compare", "--test-manifest", "--replicates", "--seed"}},
      {"analyze", {"--table", "--run", "--boost-ci", "--out"}},
      {"cam", {"--run", "--image", "--task", "--out", "--step"}}};
  const auto top = run({"--help"});
  EXPECT_EQ(top.code, kExitOk);
  for (const auto& [cmd, names] : flags) {
    EXPECT_NE(top.out.find(cmd), std::string::npos) << cmd;
    const auto r = run({cmd, "--help"});
    EXPECT_EQ(r.code, kExitOk) << cmd;
    for (const auto& f : names) EXPECT_NE(r.out.find(f), std::string::npos) << cmd << " " << f;
  }
  EXPECT_EQ(run({"--version"}).code, kExitOk);
}

TEST(Cli, UsageErrorsExitWithOne) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({"synth"}).code, kExitUsage);  // --out is required
  EXPECT_EQ(run({"synth", "--out", "/tmp/x", "--tasks", "9"}).code, kExitUsage);
  EXPECT_EQ(run({"train", "--out", "/tmp/x", "--family", "toy"}).code, kExitUsage);  // no --image-size
}

TEST(Cli, SynthWithZeroImagesWritesAnEmptyManifest) {
  TempDir dir("cli_synth0");
  EXPECT_EQ(run({"synth", "--out", (dir / "d").string(), "--n", "0"}).code, kExitOk);
  const auto lines = csv::read_lines((dir / "d/manifest.csv").string());
  ASSERT_EQ(lines.size(), 1u);
  EXPECT_EQ(lines[0].rfind("Path,", 0), 0u);
}

TEST(Cli, SynthIntoAnUnwritablePlaceIsARuntimeFailure) {
  TempDir dir("cli_synth_ro");
  write_file_atomic(dir / "file", "x");
  const auto r = run({"synth", "--out", (dir / "file/sub").string(), "--n", "2"});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST(Cli, InvalidDepthNamesTheMaximum) {
  TempDir dir("cli_k");
  const auto r = run({"train", "--out", (dir / "r").string(), "--data", dir.path().string(), "--family", "resnet",
                      "--variant", "18", "--k", "5", "--image-size", "32"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("3"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("ResNet18"), std::string::npos) << r.err;
}

TEST(Cli, PretrainedWithoutProviderIsAUsageError) {
  TempDir dir("cli_pre");
  const auto r = run({"train", "--out", (dir / "r").string(), "--data", dir.path().string(), "--family", "toy",
                      "--pretrained", "true", "--image-size", "16"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("--provider"), std::string::npos);
}

TEST_F(CliPipeline, TrainPersistsTheMergedConfiguration) {
  EXPECT_TRUE(fs::exists(path("run/metrics.csv")));
  EXPECT_TRUE(fs::exists(path("run/ensemble.json")));
  const auto config = nlohmann::json::parse(read_file(path("run/config.json")));
  EXPECT_EQ(config.at("model").at("name"), "Toy2x8Minus1");
  const auto ini = read_file(path("run/cli_config.ini"));
  EXPECT_NE(ini.find("[train]"), std::string::npos);
  EXPECT_NE(ini.find("eval-every=3"), std::string::npos) << ini;
  // Re-running into the same directory is refused.
  EXPECT_EQ(run(train_args(path("run"))).code, kExitRuntime);
}

TEST_F(CliPipeline, FlagsOverrideTheConfigFileWhichOverridesDefaults) {
  write_file_atomic(path("cfg.ini"), "[train]\nlr=0.01\nepochs=2\nbatch-size=16\n");
  auto args = train_args(path("run_cfg"));
  // Drop --epochs and --batch-size from the flags so the file supplies them.
  for (const auto* flag : {"--epochs", "--batch-size"}) {
    const auto it = std::find(args.begin(), args.end(), flag);
    args.erase(it, it + 2);
  }
  args.insert(args.begin() + 2, {"--config", path("cfg.ini").string()});
  const auto r = run(args);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto train = nlohmann::json::parse(read_file(path("run_cfg/config.json"))).at("train");
  EXPECT_EQ(train.at("learning_rate"), 0.003);  // flag beats file
  EXPECT_EQ(train.at("epochs"), 2);             // file beats default (3)
  EXPECT_EQ(train.at("batch_size"), 16);
  EXPECT_EQ(train.at("beta2"), 0.999);  // default
  // The persisted merge reproduces the run on its own.
  const auto again = run({"--log-level", "warn", "--config", path("run_cfg/cli_config.ini").string(), "train", "--out",
                          path("run_cfg2").string()});
  ASSERT_EQ(again.code, kExitOk) << again.err;
  EXPECT_EQ(read_file(path("run_cfg/metrics.csv")), read_file(path("run_cfg2/metrics.csv")));
}

TEST_F(CliPipeline, EvalCompareAnalyzeAndCam) {
  const auto test = path("data/test.csv").string();
  const auto e = run({"--log-level", "warn", "eval", "--run", path("run").string(), "--test-manifest", test,
                      "--replicates", "200"});
  ASSERT_EQ(e.code, kExitOk) << e.err;
  for (const auto* f : {"report.json", "report.csv", "predictions.csv"}) EXPECT_TRUE(fs::exists(path("run/eval") / f)) << f;
  const auto report = nlohmann::json::parse(read_file(path("run/eval/report.json")));
  EXPECT_EQ(report.at("n_replicates"), 200);

  EXPECT_EQ(run({"eval", "--run", path("nowhere").string(), "--test-manifest", test}).code, kExitUsage);

  const auto cmp = run({"--log-level", "warn", "eval", "--compare", path("run").string(), path("run").string(),
                        "--test-manifest", test, "--replicates", "100", "--out", path("cmp").string()});
  ASSERT_EQ(cmp.code, kExitOk) << cmp.err;
  EXPECT_NE(cmp.out.find("difference Toy2x8Minus1 - Toy2x8Minus1: 0.000 (0.000, 0.000)"), std::string::npos) << cmp.out;
  EXPECT_TRUE(fs::exists(path("cmp/comparison.csv")));

  const auto an = run({"--log-level", "warn", "analyze", "--run", path("run").string(), "--out", path("report").string()});
  ASSERT_EQ(an.code, kExitOk) << an.err;
  EXPECT_EQ(csv::read_lines(path("report/study_table.csv").string()).size(), 2u);  // header + the run

  const auto image = path("data/images/000003.png").string();
  const auto bad = run({"cam", "--run", path("run").string(), "--image", image, "--task", "Broken Bone", "--out",
                        path("cam").string()});
  EXPECT_EQ(bad.code, kExitUsage);
  EXPECT_NE(bad.err.find("Pleural Effusion"), std::string::npos) << bad.err;
  const auto cam = run({"--log-level", "warn", "cam", "--run", path("run").string(), "--run", path("run").string(),
                        "--image", image, "--task", "Atelectasis", "--out", path("cam").string()});
  ASSERT_EQ(cam.code, kExitOk) << cam.err;
  EXPECT_TRUE(fs::exists(path("cam/grid_Atelectasis.png")));
}

TEST(Cli, AnalyzePublishedTable) {
  TempDir dir("cli_analyze");
  const auto r = run({"--log-level", "warn", "analyze", "--table", testsupport::fixture("table1.csv").string(), "--out",
                      (dir / "rep").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("avg AUC vs params (pretrained)"), std::string::npos) << r.out;
  const auto summary = nlohmann::json::parse(read_file(dir / "rep/summary.json"));
  EXPECT_EQ(summary.at("n_records"), 16);
  EXPECT_NEAR(summary.at("correlations").at(0).at("rho").get<double>(), 0.565, 0.05);

  write_file_atomic(dir / "bad.csv", "name,avg_auc\nA,0.8\n");
  const auto bad = run({"analyze", "--table", (dir / "bad.csv").string(), "--out", (dir / "rep2").string()});
  EXPECT_NE(bad.code, kExitOk);
  EXPECT_NE(bad.err.find("missing column"), std::string::npos) << bad.err;
}
