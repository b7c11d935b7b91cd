#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

std::string cli() { return MPCA_CLI_PATH; }

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " \"" + cli() + "\" " + args + " > /dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("mpca_cli_" + name);
  fs::remove_all(p);
  return p;
}

nlohmann::json load(const fs::path& p) {
  std::ifstream f(p);
  return nlohmann::json::parse(f);
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("simulate --preset nope --out " + scratch("bad").string()), 1);
  EXPECT_EQ(run("simulate --config /nonexistent.json"), 1);
  EXPECT_EQ(run("analyze"), 1);
  EXPECT_EQ(run("analyze --input /nonexistent.csv"), 1);
}

TEST(Cli, BadConfigFile) {
  const auto dir = scratch("cfg");
  fs::create_directories(dir);
  std::ofstream(dir / "c.json") << "{\"n\": 3}";
  EXPECT_EQ(run("simulate --config " + (dir / "c.json").string() + " --out " + (dir / "o").string()), 1);
  std::ofstream(dir / "d.json") << "{not json";
  EXPECT_EQ(run("simulate --config " + (dir / "d.json").string()), 1);
  fs::remove_all(dir);
}

TEST(Cli, OracleCheckPasses) { EXPECT_EQ(run("oracle-check"), 0); }

TEST(Cli, SimulateThenAnalyze) {
  const auto dir = scratch("sim");
  ASSERT_EQ(run("simulate --preset paper-low --reps 3 --seed 5 --export-replicate 2 --out " + dir.string()), 0);
  for (const char* f : {"report.json", "timing.json", "histogram.csv", "coverage.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(load(dir / "report.json")["config"]["seed"], 5);
  const auto fit = load(dir / "replicate_2_fit.json");
  EXPECT_EQ(fit["seed"], 6);

  const auto out = dir / "an";
  ASSERT_EQ(run("analyze --input " + (dir / "replicate_2_data.csv").string() + " --r 2 --seed 6 --out " +
                out.string()),
            0);
  const auto comp = load(out / "components.json");
  for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(comp["components"][k]["hat"], fit["components"][k]["hat"]);
  EXPECT_TRUE(fs::exists(out / "loadings.csv"));
  EXPECT_TRUE(fs::exists(out / "report.json"));
  fs::remove_all(dir);
}

TEST(Cli, SeedFromEnvironment) {
  const auto a = scratch("env_a"), b = scratch("env_b");
  ASSERT_EQ(run("simulate --preset paper-low --reps 2 --seed 1 --out " + a.string(), "MPCA_SEED=77"), 0);
  ASSERT_EQ(run("simulate --preset paper-low --reps 2 --seed 77 --out " + b.string()), 0);
  EXPECT_EQ(load(a / "report.json"), load(b / "report.json"));
  EXPECT_EQ(run("simulate --preset paper-low --reps 2 --out " + a.string(), "MPCA_SEED=abc"), 1);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, AnalyzeRejectsBadDims) {
  const auto dir = scratch("dims");
  fs::create_directories(dir);
  std::ofstream(dir / "x.csv") << "t,i,value\n1,1,1\n2,1,2\n";
  EXPECT_EQ(run("analyze --input " + (dir / "x.csv").string() + " --dims 2,x"), 1);
  EXPECT_EQ(run("analyze --input " + (dir / "x.csv").string() + " --dims 2,1,1"), 1);
  fs::remove_all(dir);
}
