#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "cadd/cli.hpp"
#include "test_util.hpp"

using namespace cadd;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = 0;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cadd");
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void write_file(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

json small_run_config() {
  return {{"scene", {{"instances_per_category", 2}, {"views_per_sequence", 6}}},
          {"graph", {{"global_clusters", 4}, {"feature_size", 8}}},
          {"train",
           {{"iterations", 2},
            {"n_matches", 16},
            {"nonmatches_per_match", 2},
            {"projection_steps", 5},
            {"projection_hidden", 8},
            {"projection_output", 4}}},
          {"model", {{"widths", {8, 8, 8, 8}}}},
          {"eval", {{"pairs_per_sequence", 2}, {"composite_cases", 2}, {"queries_per_case", 4}}}};
}

}  // namespace

TEST(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"bogus"}).code, 2);
  EXPECT_EQ(cli({"train", "--variant", "medium"}).code, 2);
  EXPECT_EQ(cli({"eval"}).code, 2);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, ConfigErrorsExitWithTwo) {
  testutil::TempDir dir("cli_cfg");
  write_file(dir.path() / "bad.json", R"({"train": {"iterashuns": 3}})");
  CliRun r = cli({"gen-data", "--config", (dir.path() / "bad.json").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("iterashuns"), std::string::npos);
  write_file(dir.path() / "bad2.json", R"({"trian": {}})");
  EXPECT_EQ(cli({"gen-data", "--config", (dir.path() / "bad2.json").string()}).code, 2);
  write_file(dir.path() / "bad3.json", R"({"graph": {"feature_kind": "masked_descriptor"}})");
  CliRun r3 = cli({"build-graph", "--config", (dir.path() / "bad3.json").string(), "--data", dir.path().string()});
  EXPECT_NE(r3.code, 0);
}

TEST(Cli, RuntimeErrorsExitWithOne) {
  testutil::TempDir dir("cli_rt");
  const CliRun r = cli({"train", "--data", (dir.path() / "missing").string(), "--out", dir.path().string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, PrintsResolvedConfig) {
  testutil::TempDir dir("cli_print");
  write_file(dir.path() / "c.json", small_run_config().dump());
  const CliRun r = cli({"gen-data", "--config", (dir.path() / "c.json").string(), "--out", (dir.path() / "d").string(),
                     "--seed", "21"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto end = r.out.find("\n}");
  const json printed = json::parse(r.out.substr(0, end + 2));
  EXPECT_EQ(printed["command"], "gen-data");
  EXPECT_EQ(printed["scene"]["seed"], 21);
  EXPECT_EQ(printed["train"]["seed"], 21);
  EXPECT_EQ(printed["train"]["n_matches"], 16);
}

TEST(Cli, EndToEndPipelineIsDeterministic) {
  testutil::TempDir dir("cli_e2e");
  const fs::path cfg = dir.path() / "run.json";
  write_file(cfg, small_run_config().dump());
  const std::string c = cfg.string();
  const std::string data = (dir.path() / "data").string();
  const std::string graph = (dir.path() / "graph.json").string();
  const std::string runs = (dir.path() / "runs").string();

  ASSERT_EQ(cli({"gen-data", "--config", c, "--out", data}).code, 0);
  ASSERT_EQ(cli({"build-graph", "--config", c, "--data", data, "--out", graph}).code, 0);
  for (const char* v : {"vanilla", "soft", "hard"}) {
    const CliRun r = cli({"train", "--config", c, "--data", data, "--graph", graph, "--variant", v, "--out", runs});
    ASSERT_EQ(r.code, 0) << v << ": " << r.err;
    EXPECT_TRUE(fs::exists(fs::path(runs) / (std::string(v) + ".ckpt")));
    std::ifstream log(fs::path(runs) / (std::string(v) + "_log.jsonl"));
    int lines = 0;
    for (std::string line; std::getline(log, line);) ++lines;
    EXPECT_EQ(lines, 2);
  }
  const std::string ckpts = runs + "/vanilla.ckpt," + runs + "/soft.ckpt," + runs + "/hard.ckpt";
  const fs::path r1 = dir.path() / "r1" / "report.json";
  const fs::path r2 = dir.path() / "r2" / "report.json";
  ASSERT_EQ(cli({"eval", "--config", c, "--data", data, "--checkpoints", ckpts, "--report", r1.string()}).code, 0);
  ASSERT_EQ(cli({"eval", "--config", c, "--data", data, "--checkpoints", ckpts, "--report", r2.string()}).code, 0);
  EXPECT_EQ(read_file(r1), read_file(r2));
  EXPECT_TRUE(fs::exists(dir.path() / "r1" / "report_cdf.png"));
  EXPECT_TRUE(fs::exists(dir.path() / "r1" / "report_errors.csv"));
  const json report = json::parse(read_file(r1));
  EXPECT_EQ(report["format"], "cadd-metrics-report");
  ASSERT_EQ(report["models"].size(), 4u);
  EXPECT_EQ(report["models"][0]["name"], "gradient_histogram_baseline");
  EXPECT_TRUE(report["models"][3].contains("clustering_accuracy"));

  const fs::path csv = dir.path() / "desc.csv";
  ASSERT_EQ(cli({"export", "--config", c, "--data", data, "--checkpoints", runs + "/vanilla.ckpt", "--out", csv.string(),
                 "--pixels", "5", "--frames", "3"})
                .code,
            0);
  std::ifstream in(csv);
  int rows = -1;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 4 * 3 * 5);  // 2 categories x 2 instances

  // A graph built from other data is refused.
  ASSERT_EQ(cli({"gen-data", "--config", c, "--out", data + "2", "--seed", "99"}).code, 0);
  EXPECT_EQ(cli({"train", "--config", c, "--data", data + "2", "--graph", graph, "--variant", "soft", "--out", runs}).code, 2);
}

TEST(Cli, HeldOutViewsShareObjects) {
  const Dataset& d = testutil::tiny_dataset();
  const Dataset h = held_out_views(d, 555);
  ASSERT_EQ(h.sequences.size(), d.sequences.size());
  for (std::size_t i = 0; i < d.sequences.size(); ++i) {
    EXPECT_EQ(h.sequences[i].sequence_id, d.sequences[i].sequence_id);
    EXPECT_NE(h.sequences[i].frames[0].rgb, d.sequences[i].frames[0].rgb);
  }
  Dataset bare = d;
  bare.metadata = json::object();
  EXPECT_THROW(held_out_views(bare, 1), std::invalid_argument);
}
