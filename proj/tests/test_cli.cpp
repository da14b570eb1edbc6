#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <vector>

#include "cli_util.hpp"
#include "lightn/io.hpp"
#include "test_util.hpp"

using namespace lightn;
using namespace lightn::test;
namespace fs = std::filesystem;

namespace {

fs::path write_cloud(const fs::path& dir, const std::string& name, std::size_t n, std::uint64_t seed,
                     CloudFormat f = CloudFormat::xyz) {
  const fs::path p = dir / name;
  save_pointcloud(random_cloud(n, seed), p.string(), f);
  return p;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

const char* kTiny = "--n 32 --train-per-class 2 --test-per-class 1 --task-epochs 1 --epochs 1 --m 4";

}  // namespace

TEST(Cli, FlopsWritesReports) {
  const fs::path d = fresh_dir("cli_flops");
  const CliResult r = run_cli("flops --output " + q(d));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("\"status\":\"ok\""), std::string::npos);
  const std::string csv = slurp(d / "cost.csv");
  EXPECT_EQ(csv.rfind("config,N,m,flops,params,reduction_pct,increase_pct\n", 0), 0u);
  EXPECT_NE(csv.find("\npointnet_full,1024,1024,"), std::string::npos);
  EXPECT_NE(csv.find("\nlightn_self_correlation+pointnet_full,1024,32,"), std::string::npos);
  const std::string json = slurp(d / "cost.json");
  EXPECT_NE(json.find("1 MAC = 2 FLOPs"), std::string::npos);
  EXPECT_NE(json.find("150994944"), std::string::npos);
  EXPECT_NE(json.find("138412032"), std::string::npos);
}

TEST(Cli, SampleAllPointsWithFpsIsAPermutation) {
  const fs::path d = fresh_dir("cli_perm");
  const fs::path in = write_cloud(d, "c.xyz", 40, 3);
  const CliResult r = run_cli("sample --input " + q(in) + " --m 40 --sampler fps --output " + q(d));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  auto a = load_pointcloud(in.string(), CloudFormat::xyz).points;
  auto b = load_pointcloud((d / "c.sampled.xyz").string(), CloudFormat::xyz).points;
  EXPECT_NE(a, b);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
  EXPECT_TRUE(fs::exists(d / "metrics.json"));
}

TEST(Cli, SampleCsvAndSeveralInputs) {
  const fs::path d = fresh_dir("cli_csv");
  const fs::path a = write_cloud(d, "a.csv", 30, 1, CloudFormat::csv), b = write_cloud(d, "b.csv", 20, 2, CloudFormat::csv);
  const CliResult r =
      run_cli("sample --format csv --sampler voxel --m 8 --input " + q(a) + " --input " + q(b) + " --output " + q(d));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(load_pointcloud((d / "a.sampled.csv").string(), CloudFormat::csv).size(), 8u);
  EXPECT_EQ(load_pointcloud((d / "b.sampled.csv").string(), CloudFormat::csv).size(), 8u);
}

TEST(Cli, ErrorsUseExitCodesAndJson) {
  const fs::path d = fresh_dir("cli_err");
  const fs::path in = write_cloud(d, "c.xyz", 10, 1);
  CliResult r = run_cli("sample --input " + q(in) + " --m 11 --output " + q(d));
  EXPECT_EQ(r.exit_code, 4);
  EXPECT_NE(r.err.find("\"status\":\"error\""), std::string::npos);
  EXPECT_TRUE(r.out.empty());

  r = run_cli("sample --bogus");
  EXPECT_EQ(r.exit_code, 2);
  r = run_cli("sample --input " + q(in) + " --set colour=red --output " + q(d));
  EXPECT_EQ(r.exit_code, 2);
  r = run_cli("sample --input " + q(in) + " --sampler magic --output " + q(d));
  EXPECT_EQ(r.exit_code, 2);

  std::ofstream(d / "bad.xyz") << "0 0 0\n1 1\n";
  r = run_cli("sample --input " + q(d / "bad.xyz") + " --m 1 --output " + q(d));
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.err.find("line 2"), std::string::npos);

  r = run_cli("sample --input " + q(d / "missing.xyz") + " --m 1 --output " + q(d));
  EXPECT_EQ(r.exit_code, 1);
}

TEST(Cli, ConfigFileAndOverrides) {
  const fs::path d = fresh_dir("cli_cfg");
  const fs::path in = write_cloud(d, "c.xyz", 25, 4);
  std::ofstream(d / "run.cfg") << "# sample five\nm = 5\nsampler = random\nseed = 9\n";
  CliResult r = run_cli("sample --config " + q(d / "run.cfg") + " --input " + q(in) + " --output " + q(d));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(load_pointcloud((d / "c.sampled.xyz").string(), CloudFormat::xyz).size(), 5u);
  r = run_cli("sample --config " + q(d / "run.cfg") + " --set m=7 --input " + q(in) + " --output " + q(d));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(load_pointcloud((d / "c.sampled.xyz").string(), CloudFormat::xyz).size(), 7u);
  EXPECT_NE(slurp(d / "metrics.json").find("m = 7"), std::string::npos);
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
  const fs::path d = fresh_dir("cli_det");
  const fs::path in = write_cloud(d, "c.xyz", 30, 5);
  const std::string args = "sample --sampler random --m 9 --seed 4 --input " + q(in) + " --output " + q(d);
  ASSERT_EQ(run_cli(args).exit_code, 0);
  const std::string first = slurp(d / "c.sampled.xyz") + slurp(d / "metrics.json");
  ASSERT_EQ(run_cli(args).exit_code, 0);
  EXPECT_EQ(slurp(d / "c.sampled.xyz") + slurp(d / "metrics.json"), first);
}

TEST(Cli, TrainAndEvaluateTinyPipeline) {
  const fs::path d = fresh_dir("cli_pipe");
  const std::string base = std::string(kTiny) + " --output " + q(d);
  ASSERT_EQ(run_cli("train-task " + base).exit_code, 0);
  ASSERT_EQ(run_cli("train-sampler " + base).exit_code, 0);
  for (const char* f : {"task.ckpt", "task_log.csv", "sampler.ckpt", "sampler_log.csv", "sampler_summary.json"})
    EXPECT_TRUE(fs::exists(d / f)) << f;
  const CliResult r = run_cli("eval " + base + " --sampler-checkpoint " + q(d / "sampler.ckpt") + " --task " +
                              q(d / "task.ckpt"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const std::string eval = slurp(d / "eval.json");
  EXPECT_NE(eval.find("\"subset_property\": true"), std::string::npos);
}

TEST(Cli, OutputDirectoryFromEnvironment) {
  const fs::path d = fresh_dir("cli_env");
  ::setenv("LIGHTN_OUTPUT_DIR", d.string().c_str(), 1);
  const CliResult r = run_cli("flops --flops-n 64 --m-list 4");
  ::unsetenv("LIGHTN_OUTPUT_DIR");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_TRUE(fs::exists(d / "cost.csv"));
  EXPECT_NE(slurp(d / "cost.csv").find("\nlightn_self_correlation+pointnet_full,64,4,"), std::string::npos);
}
