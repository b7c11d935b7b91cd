#pragma once

// Small-instance equivalences behind `mpca oracle-check`.

#include <functional>
#include <string>
#include <vector>

#include "mpca/estimator.hpp"
#include "mpca/oracle/oracle.hpp"
#include "mpca/spiked_model.hpp"

namespace mpca::oracle {

struct CheckRow {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// `als` is the configuration under test; its update hook lets callers
/// sabotage the mode updates and watch the checks fail.
inline std::vector<CheckRow> run_checks(const AlsConfig& als = {}) {
  std::vector<CheckRow> rows;
  auto add = [&](std::string name, double value, double tol) {
    rows.push_back({std::move(name), value, tol, value <= tol});
  };

  // Vector data: the rank-one problem is ordinary PCA.
  {
    const auto model = ModelConfig{{30}, 1, {2.0}, 1.0, ComponentsMode::kRandom, 7}.build();
    const auto data = sample(model, 200, NoiseDistribution::kStandardNormal, 11);
    AlsConfig cfg = als;
    cfg.seed = 3;
    const auto res = rank_one_als(CovarianceView(data), cfg);
    const auto eig = dense_eig(DenseCovariance(data));
    add("p=1 leading eigenvector sin angle", sin_angle(res.pc.factors[0].coords(), Vector(eig.vectors.col(0))),
        1e-8);
  }

  // Global optimum on the 2x2 grid.
  {
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 5; ++s) {
      const auto model = ModelConfig{{2, 2}, 1, {1.5}, 1.0, ComponentsMode::kRandom, 100 + s}.build();
      const auto data = sample(model, 200, NoiseDistribution::kStandardNormal, 200 + s);
      AlsConfig cfg = als;
      cfg.seed = s;
      const auto res = rank_one_als(CovarianceView(data), cfg);
      const auto grid = grid_best_rank_one(data, 0.001);
      worst = std::max(worst, std::abs(res.pc.value - grid.objective));
    }
    add("2x2 grid optimum objective gap", worst, 1e-4);
  }

  // Stationarity and the unconstrained bound on a small matrix instance.
  {
    const auto model = ModelConfig{{6, 5}, 2, {3.0, 2.0}, 1.0, ComponentsMode::kRandom, 5}.build();
    const auto data = sample(model, 150, NoiseDistribution::kStandardNormal, 9);
    AlsConfig cfg = als;
    cfg.seed = 1;
    const CovarianceView view(data);
    const auto res = rank_one_als(view, cfg);
    double resid = 0.0;
    for (std::size_t q = 0; q < 2; ++q) {
      const Matrix m = contracted_matrix(view, other_factors(res.pc, q), q);
      resid = std::max(resid, eigen_residual(m, res.pc.factors[q].coords()));
    }
    add("stationarity residual", resid, 1e-8);
    const auto eig = dense_eig(DenseCovariance(data));
    add("objective above unconstrained maximum", std::max(0.0, res.pc.value - eig.values(0)), 1e-10);
  }

  // Noiseless rank one: the contracted matrix has rank one along the truth.
  {
    const auto model = ModelConfig{{5, 4}, 1, {2.0}, 0.0, ComponentsMode::kRandom, 21}.build();
    const auto data = sample(model, 40, NoiseDistribution::kStandardNormal, 4);
    const Matrix m =
        contracted_matrix(CovarianceView(data), other_factors(model.components()[0], 0), 0);
    const auto eig = dense_eig(m);
    add("noiseless contracted matrix second eigenvalue", std::abs(eig.values(1)), 1e-10);
    add("noiseless contracted matrix eigenvector sin angle",
        sin_angle(Vector(eig.vectors.col(0)), model.components()[0].factors[0].coords()), 1e-8);
  }
  return rows;
}

}  // namespace mpca::oracle
