#include <gtest/gtest.h>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "app/commands.hpp"
#include "app/config.hpp"
#include "lcnet/csv.hpp"
#include "support/temp_dir.hpp"

using namespace lcnet;
using lcnet::testing::TempDir;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "lcnet");
  std::ostringstream out, err;
  Run r;
  r.code = app::run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> tiny(const std::filesystem::path& out) {
  return {"-o", out.string(), "-s", "data.classes=2", "-s", "data.synthetic_train=400", "-s", "data.synthetic_test=100",
          "-s", "model.blocks_per_stage=[1,1,1]", "-s", "train.epochs=5", "-s", "train.decay_period=5"};
}

std::vector<std::string> with(std::vector<std::string> base, const std::vector<std::string>& extra) {
  base.insert(base.begin(), extra.begin(), extra.end());
  return base;
}

}  // namespace

TEST(Cli, PrintConfigIsValidJsonWithDefaults) {
  const auto r = cli({"print-config"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["train"]["batch_size"], 96);
  EXPECT_EQ(j["train"]["lambda"], 0.0);
  EXPECT_EQ(j["eval"]["placement"], "sequential");
  EXPECT_EQ(app::config_from_json(j).train.epochs, 30);
}

TEST(Cli, NegativeLambdaRejectedNamingField) {
  const auto r = cli({"train", "--lambda", "-1"});
  EXPECT_EQ(r.code, app::exit_config);
  EXPECT_NE(r.err.find("train.lambda"), std::string::npos) << r.err;
}

TEST(Cli, SchemaErrors) {
  EXPECT_EQ(cli({"print-config", "-s", "train.colour=3"}).code, app::exit_config);
  EXPECT_EQ(cli({"print-config", "-s", "train.epochs=\"many\""}).code, app::exit_config);
  EXPECT_EQ(cli({"print-config", "-s", "eval.placement=diagonal"}).code, app::exit_config);
  EXPECT_EQ(cli({"print-config", "-s", "train.decay_period=40"}).code, app::exit_config);
  EXPECT_EQ(cli({"print-config", "-c", "/nonexistent/config.json"}).code, app::exit_config);
  EXPECT_EQ(cli({"launch"}).code, app::exit_config);
  EXPECT_EQ(cli({}).code, app::exit_config);
}

TEST(Cli, ConfigFileThenOverrides) {
  TempDir dir("cli");
  std::ofstream(dir / "c.json") << R"({"train": {"lambda": 0.002, "epochs": 12}, "eval": {"extremes_k": 3}})";
  const auto r = cli({"print-config", "-c", (dir / "c.json").string(), "-s", "train.epochs=20"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["train"]["lambda"], 0.002);
  EXPECT_EQ(j["train"]["epochs"], 20);
  EXPECT_EQ(j["eval"]["extremes_k"], 3);
}

TEST(Cli, MissingCheckpointIsDataError) {
  TempDir dir("cli");
  EXPECT_EQ(cli({"eval", "--checkpoint", (dir / "none").string(), "-o", (dir / "o").string()}).code, app::exit_data);
  EXPECT_EQ(cli({"eval", "-o", (dir / "o").string()}).code, app::exit_config);
}

TEST(Cli, TrainTwoClassSyntheticIsAccurateAndReproducible) {
  TempDir a("cli"), b("cli");
  const auto ra = cli(with(tiny(a / "run"), {"train"}));
  ASSERT_EQ(ra.code, 0) << ra.err;
  const auto rb = cli(with(tiny(b / "run"), {"train"}));
  ASSERT_EQ(rb.code, 0) << rb.err;
  EXPECT_EQ(ra.out, rb.out);
  EXPECT_EQ(slurp(a / "run/metrics.csv"), slurp(b / "run/metrics.csv"));
  EXPECT_EQ(slurp(a / "run/final/params.bin"), slurp(b / "run/final/params.bin"));
  const auto metrics = csv::read(a / "run/metrics.csv");
  ASSERT_EQ(metrics.rows.size(), 5u);
  EXPECT_GT(csv::parse_double(metrics.rows.back()[8]), 0.9);

  const auto ck = (a / "run/final").string();
  const auto params_before = slurp(a / "run/final/params.bin");
  const auto manifest_before = slurp(a / "run/final/manifest.json");
  for (const std::string cmd : {"eval", "trace", "flops-report", "activation-matrix"}) {
    const auto r = cli(with(tiny(a / cmd), {cmd, "--checkpoint", ck}));
    EXPECT_EQ(r.code, 0) << cmd << ": " << r.err;
  }
  EXPECT_EQ(slurp(a / "run/final/params.bin"), params_before);
  EXPECT_EQ(slurp(a / "run/final/manifest.json"), manifest_before);
  for (const auto* f : {"eval/flops_dense.csv", "eval/flops_parallel.csv", "eval/flops_sequential.csv", "eval/eval_summary.json",
                        "trace/traces.csv", "trace/block_rates.csv", "flops-report/extremes_low.csv",
                        "flops-report/extremes_high.csv", "activation-matrix/activation_matrix_block0.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(a / f)) << f;
  }
  const auto bad = cli(with(tiny(a / "bad"), {"activation-matrix", "--checkpoint", ck, "-s", "eval.activation_block=9"}));
  EXPECT_EQ(bad.code, app::exit_config);
  EXPECT_NE(bad.err.find("eval.activation_block"), std::string::npos);
}
