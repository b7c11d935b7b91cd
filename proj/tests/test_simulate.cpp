#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "mpca/simulate.hpp"

using namespace mpca;

namespace {

SimConfig small(std::size_t reps = 12) {
  auto c = make_preset("paper-low");
  c.replicates = reps;
  c.bins = 8;
  return c;
}

}  // namespace

TEST(Presets, Shapes) {
  for (const auto& name : preset_names()) {
    const auto c = make_preset(name);
    EXPECT_NO_THROW(c.validate()) << name;
    EXPECT_EQ(c.model.r, 2u);
    EXPECT_EQ(c.targets.size(), 5u);
  }
  EXPECT_EQ(make_preset("paper-high").model.dims, (Dims{50, 50}));
  EXPECT_EQ(make_preset("paper-poisson-low").model.noise, NoiseDistribution::kCenteredPoisson);
  EXPECT_THROW(make_preset("nope"), InvalidInput);
}

TEST(Config, JsonOverridesPreset) {
  const auto j = nlohmann::json::parse(R"({"preset": "paper-high", "n": 100, "replicates": 7,
                                          "targets": [[1, 2, 3]], "alpha": 0.1})");
  const auto c = sim_config_from_json(j);
  EXPECT_EQ(c.model.dims, (Dims{50, 50}));
  EXPECT_EQ(c.n, 100u);
  EXPECT_EQ(c.replicates, 7u);
  ASSERT_EQ(c.targets.size(), 1u);
  EXPECT_EQ(c.targets[0].k, 0u);
  EXPECT_EQ(c.targets[0].q, 1u);
  EXPECT_EQ(c.targets[0].coord, 2u);
  EXPECT_EQ(c.alpha, 0.1);
  // round trip
  const auto back = sim_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Config, Errors) {
  EXPECT_THROW(sim_config_from_json(nlohmann::json::parse(R"({"preset": "x"})")), InvalidInput);
  EXPECT_THROW(sim_config_from_json(nlohmann::json::parse(R"({"n": "many"})")), InvalidInput);
  EXPECT_THROW(sim_config_from_json(nlohmann::json::parse(R"({"targets": [[0, 1, 1]]})")), InvalidInput);
  auto c = small();
  c.n = 4;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = small();
  c.targets = {{2, 0, 0}};
  EXPECT_THROW(c.validate(), InvalidInput);
  c = small();
  c.export_replicate = 12;
  EXPECT_THROW(c.validate(), InvalidInput);
}

TEST(Simulate, SummaryCounts) {
  const auto cfg = small();
  const auto r = simulate(cfg);
  EXPECT_EQ(r.replicates.size(), 12u);
  EXPECT_EQ(r.failed, 0u);
  EXPECT_FALSE(run_failed(r));
  ASSERT_EQ(r.regimes.size(), 3u);
  for (const auto& rs : r.regimes) {
    ASSERT_EQ(rs.targets.size(), 5u);
    for (const auto& t : rs.targets) {
      std::size_t total = 0;
      for (const auto& b : t.bins) total += b.count;
      EXPECT_EQ(total, t.count);
      EXPECT_EQ(t.bins.size(), 8u);
      EXPECT_LE(t.covered, t.count);
      EXPECT_LE(t.rejected, t.count);
      EXPECT_GT(t.overlay.sd, 0.0);
    }
    for (double x : rs.mean_inner_truth) {
      EXPECT_GT(x, 0.8);
      EXPECT_LE(x, 1.0 + 1e-12);
    }
  }
  // paper-low truth values for the first target
  EXPECT_NEAR(r.regimes[0].targets[0].truth, std::sqrt(3.0) / 2.0, 1e-15);
  std::ostringstream h, c;
  write_histogram_csv(h, r);
  write_coverage_csv(c, r);
  std::size_t lines = 0;
  for (char ch : h.str()) lines += ch == '\n';
  EXPECT_EQ(lines, 1u + 3u * 5u * 8u);
  lines = 0;
  for (char ch : c.str()) lines += ch == '\n';
  EXPECT_EQ(lines, 1u + 3u * 5u);
}

TEST(Simulate, Deterministic) {
  auto cfg = small(6);
  const auto a = report_json(simulate(cfg)).dump();
  const auto b = report_json(simulate(cfg)).dump();
  EXPECT_EQ(a, b);
  cfg.jobs = 2;
  EXPECT_EQ(report_json(simulate(cfg)).dump(), a);
  cfg.seed = 43;
  EXPECT_NE(report_json(simulate(cfg)).dump(), a);
}

TEST(Simulate, ReplicateSeedsAreIndependentOfCount) {
  // replicate i depends only on base seed + i
  auto c6 = small(6), c3 = small(3);
  const auto r6 = simulate(c6), r3 = simulate(c3);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r6.replicates[i].seed, r3.replicates[i].seed);
    EXPECT_EQ(r6.replicates[i].sigma0_sq_hat, r3.replicates[i].sigma0_sq_hat);
  }
}

TEST(Simulate, WritesOutputs) {
  auto cfg = small(4);
  cfg.export_replicate = 1;
  const auto dir = std::filesystem::temp_directory_path() / "mpca_test_simulate_out";
  std::filesystem::remove_all(dir);
  write_outputs(dir, simulate(cfg));
  for (const char* f : {"report.json", "timing.json", "histogram.csv", "coverage.csv",
                        "replicate_2_data.csv", "replicate_2_fit.json"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  std::ifstream fit(dir / "replicate_2_fit.json");
  const auto j = nlohmann::json::parse(fit);
  EXPECT_EQ(j["seed"], 43);
  EXPECT_EQ(j["components"].size(), 2u);
  std::filesystem::remove_all(dir);
}
