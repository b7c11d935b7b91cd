#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "mpca/debias.hpp"
#include "mpca/simulate.hpp"

using namespace mpca;

namespace {

SpikedModel paper_low() {
  return ModelConfig{{10, 10}, 2, {2.0, 2.0}, 1.0, ComponentsMode::kPaperSim, 0}.build();
}

double dist(const UnitVector& a, const UnitVector& b) { return (a.coords() - b.coords()).norm(); }

}  // namespace

TEST(SplitPlan, ParityHalvesAndQuarters) {
  auto p = SplitPlan::make(103, 5);
  EXPECT_EQ(p.n_split, 102u);
  EXPECT_EQ(p.halves[0].size(), 51u);
  EXPECT_EQ(p.halves[1].size(), 51u);
  EXPECT_EQ(p.n_quarter, 100u);
  std::set<std::size_t> all(p.halves[0].begin(), p.halves[0].end());
  all.insert(p.halves[1].begin(), p.halves[1].end());
  EXPECT_EQ(all.size(), 102u);
  for (std::size_t h = 0; h < 2; ++h) {
    std::set<std::size_t> half(p.halves[h].begin(), p.halves[h].end());
    for (std::size_t j = 0; j < 2; ++j)
      for (auto i : p.quarters[h][j]) EXPECT_TRUE(half.count(i));
  }
  auto q = SplitPlan::make(103, 5);
  EXPECT_EQ(p.permutation, q.permutation);
  EXPECT_NE(p.permutation, SplitPlan::make(103, 6).permutation);
  EXPECT_THROW(SplitPlan::make(1, 0), InvalidInput);
}

TEST(OneStep, NoiselessFixedPoint) {
  auto m = ModelConfig{{6, 5, 4}, 2, {3.0, 2.0}, 0.0, ComponentsMode::kRandom, 1}.build();
  auto s = sample(m, 40, NoiseDistribution::kStandardNormal, 2);
  for (const auto& u : m.components()) {
    auto t = one_step_update(s, u);
    for (std::size_t q = 0; q < 3; ++q) EXPECT_LE(dist(t[q], u.factors[q]), 1e-12);
  }
}

TEST(OneStep, FirstComponentIsAlreadyStationary) {
  auto m = ModelConfig{{8, 6}, 2, {3.0, 2.0}, 1.0, ComponentsMode::kRandom, 3}.build();
  auto s = sample(m, 150, NoiseDistribution::kStandardNormal, 4);
  auto fit = fit_mpca(s, 2, {});
  auto t = one_step_update(s, fit[0]);
  for (std::size_t q = 0; q < 2; ++q) {
    EXPECT_LE(dist(t[q], fit[0].factors[q]), 1e-8);
  }
  // the second component is not: deflation constrained it
  auto t2 = one_step_update(s, fit[1]);
  for (std::size_t q = 0; q < 2; ++q) EXPECT_GE(t2[q].coords().dot(fit[1].factors[q].coords()), 0.0);
}

TEST(SplitFit, DuplicateHalvesReproduceFullFit) {
  auto m = ModelConfig{{7, 6}, 2, {3.0, 2.0}, 1.0, ComponentsMode::kRandom, 5}.build();
  auto base = sample(m, 60, NoiseDistribution::kStandardNormal, 6);
  std::vector<double> twice(base.stacked().begin(), base.stacked().end());
  twice.insert(twice.end(), base.stacked().begin(), base.stacked().end());
  SampleSet s(base.dims(), 120, twice);
  std::vector<std::size_t> a, b;
  for (std::size_t i = 0; i < 60; ++i) {
    a.push_back(i);
    b.push_back(i + 60);
  }
  auto bundle = split_fit(s, 2, {}, SplitPlan::from_halves(a, b));
  for (std::size_t h = 0; h < 2; ++h) {
    EXPECT_EQ(bundle.relabel[h], (std::vector<std::size_t>{0, 1}));
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t q = 0; q < 2; ++q)
        EXPECT_LE(dist(bundle.components[k].hat_half[h].factors[q], bundle.components[k].hat.factors[q]),
                  1e-8);
  }
}

TEST(Relabel, RestoresSwappedOrder) {
  auto m = ModelConfig{{6, 5}, 2, {3.0, 2.0}, 1.0, ComponentsMode::kRandom, 7}.build();
  std::vector<RankOnePC> est{m.components()[1], m.components()[0]};
  est[0].factors[0] = -est[0].factors[0];
  auto origin = relabel_against(m.components(), est);
  EXPECT_EQ(origin, (std::vector<std::size_t>{1, 0}));
  EXPECT_LE(sin_angle(est[0], m.components()[0]), 1e-15);
  align_signs(est[1], m.components()[1]);
  EXPECT_EQ(est[1].factors[0].coords(), m.components()[1].factors[0].coords());
}

TEST(CrossFit, NoiselessRecoversTruth) {
  auto m = ModelConfig{{6, 5, 4}, 2, {3.0, 2.0}, 0.0, ComponentsMode::kRandom, 8}.build();
  auto s = sample(m, 40, NoiseDistribution::kStandardNormal, 9);
  auto b = estimate_bundle(s, 2, {}, {true, true, 3});
  for (std::size_t k = 0; k < 2; ++k) {
    // components may come out in either order
    const auto& c = b.components[k];
    std::size_t t = sin_angle(c.hat, m.components()[0]) < 0.5 ? 0 : 1;
    for (std::size_t q = 0; q < 3; ++q) {
      EXPECT_LE(sin_angle(c.check[q], m.components()[t].factors[q]), 1e-10);
      EXPECT_NEAR(c.check[q].coords().norm(), 1.0, 1e-14);
      EXPECT_GE(c.check_halves[q][0].coords().dot(c.check_halves[q][1].coords()), 0.0);
      EXPECT_NEAR(c.quarter_inner[q][0], 1.0, 1e-10);
      EXPECT_NEAR(c.quarter_inner[q][1], 1.0, 1e-10);
      ASSERT_TRUE(c.b_empirical[q]);
      EXPECT_NEAR(*c.b_empirical[q], 0.0, 1e-10);
    }
  }
}

TEST(CrossFit, HalvesOrientedAndAveraged) {
  auto s = sample(paper_low(), 200, NoiseDistribution::kStandardNormal, 10);
  auto b = estimate_bundle(s, 2, {}, {true, true, 11});
  for (const auto& c : b.components)
    for (std::size_t q = 0; q < 2; ++q) {
      EXPECT_GE(c.check_halves[q][0].coords().dot(c.check_halves[q][1].coords()), 0.0);
      Vector sum = c.check_halves[q][0].coords() + c.check_halves[q][1].coords();
      EXPECT_LE((c.check[q].coords() - sum.normalized()).norm(), 1e-15);
    }
}

TEST(ExplicitBias, Values) {
  EXPECT_EQ(explicit_bias(50, 400, 0.0, 9.0), 0.0);
  EXPECT_NEAR(explicit_bias(50, 400, 1.0, 9.0), std::sqrt(1.0 + 0.125 * (1.0 / 9 + 1.0 / 81)) - 1.0, 1e-15);
  EXPECT_NEAR(explicit_bias(50, 400, 1.0, 9.0), 0.0076865, 1e-7);
  EXPECT_NEAR(explicit_bias(10, 200, 1.0, 4.0), 0.0077822, 1e-7);
  EXPECT_THROW(explicit_bias(10, 200, 1.0, 0.0), InferenceUnavailable);
}

TEST(ExplicitBias, Monotone) {
  Rng rng(12);
  for (int t = 0; t < 200; ++t) {
    const std::size_t d = 1 + rng.uniform_index(100), n = 10 + rng.uniform_index(1000);
    const double s0 = 0.1 + rng.uniform(), sk = 0.5 + 3 * rng.uniform();
    const double b = explicit_bias(d, n, s0, sk);
    EXPECT_GE(b, 0.0);
    EXPECT_GT(explicit_bias(d + 1, n, s0, sk), b);
    EXPECT_LT(explicit_bias(d, n + 1, s0, sk), b);
    EXPECT_GT(explicit_bias(d, n, s0 * 1.1, sk), b);
    EXPECT_LT(explicit_bias(d, n, s0, sk * 1.1), b);
  }
}

TEST(ExplicitBias, NegligibleAtRootN) {
  double prev = 1e300;
  for (std::size_t n : {100, 1000, 10000, 100000, 1000000}) {
    const double b = explicit_bias(10, n, 1.0, 4.0);
    const double nb2 = static_cast<double>(n) * b * b;
    EXPECT_LT(nb2, prev);
    prev = nb2;
  }
  EXPECT_LT(prev, 1e-5);
}

TEST(EmpiricalBias, SignInvariant) {
  Rng rng(13);
  auto rv = [&] {
    Vector v(6);
    for (auto& x : v) x = rng.normal();
    return v;
  };
  const Vector base = rv().normalized();
  auto near = [&] { return (base + 0.1 * rv()).normalized().eval(); };
  Vector c1 = near(), c2 = near(), q11 = near(), q12 = near(), q21 = near(), q22 = near();
  auto b0 = empirical_bias_from(c1, c2, q11, q12, q21, q22);
  ASSERT_TRUE(b0);
  auto b1 = empirical_bias_from(c1, -c2, -q11, q12, q21, -q22);
  ASSERT_TRUE(b1);
  EXPECT_NEAR(*b0, *b1, 1e-15);
  // formula by hand
  EXPECT_NEAR(*b0, (c1 + c2).norm() / (std::sqrt(q11.dot(q12)) + std::sqrt(q21.dot(q22))) - 1.0, 1e-15);
}

TEST(EmpiricalBias, NonpositiveOverlapUnavailable) {
  Vector e1 = Vector::Unit(3, 0), e2 = Vector::Unit(3, 1);
  std::array<double, 2> ov{};
  // q11 and q12 orthogonal after orientation
  auto b = empirical_bias_from(e1, e1, (e1 + e2).normalized(), (e1 - e2).normalized(), e1, e1, &ov);
  EXPECT_FALSE(b);
  EXPECT_NEAR(ov[0], 0.0, 1e-15);
}

TEST(Bundle, RegimeABiasNegligibleAtLowDimension) {
  auto s = sample(paper_low(), 200, NoiseDistribution::kStandardNormal, 14);
  auto b = estimate_bundle(s, 2, {}, {true, false, 15});
  for (const auto& c : b.components) {
    ASSERT_TRUE(c.b_explicit[0]);
    const double x = c.tilde[0][0];
    EXPECT_LT(std::abs((1.0 + *c.b_explicit[0]) * x - x), 0.01);
  }
}

TEST(Bundle, PaperLowMonteCarlo) {
  // one-step estimates sit at <u, e1> / (1 + b); the spikes are equal, so
  // half fits may come out in either order
  auto m = paper_low();
  SimConfig cfg = make_preset("paper-low");
  cfg.replicates = 300;
  std::vector<double> x;
  int identity = 0, swapped = 0;
  for (std::size_t r = 0; r < cfg.replicates; ++r) {
    EstimateBundle b;
    auto rec = run_replicate(cfg, m, r, &b);
    ASSERT_FALSE(rec.error);
    x.push_back(rec.regimes.at(Regime::kA).targets[0].point);
    for (const auto& rl : b.relabel) {
      identity += rl == std::vector<std::size_t>{0, 1};
      swapped += rl == std::vector<std::size_t>{1, 0};
    }
  }
  double mean = 0, var = 0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size() - 1);
  const double se = std::sqrt(var / static_cast<double>(x.size()));
  const double b = explicit_bias(10, 200, 1.0, 4.0);
  EXPECT_LE(std::abs(mean - std::sqrt(3.0) / 2.0 / (1.0 + b)), 3.0 * se);
  EXPECT_EQ(identity + swapped, static_cast<int>(2 * cfg.replicates));
  EXPECT_GT(swapped, 0);
}
