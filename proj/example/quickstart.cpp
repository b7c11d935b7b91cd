// Fit two multiway PCs to simulated 10 x 10 matrix data and print a
// confidence interval for one loading.

#include <cstdio>

#include "mpca/mpca.hpp"

int main() {
  using namespace mpca;

  // u_1 = (sqrt(3)/2, 1/2, 0, ...) in both modes, as in the paper-low preset
  const SpikedModel model = ModelConfig{{10, 10}, 2, {2.0, 2.0}, 1.0, ComponentsMode::kPaperSim, 0}.build();
  const SampleSet data = sample(model, 200, NoiseDistribution::kStandardNormal, 7);

  AlsConfig als;
  als.seed = 1;
  const EstimateBundle fit = estimate_bundle(data, 2, als, {true, true, 2});

  std::printf("sigma0^2 hat %.4f\n", fit.variances.sigma0_sq_hat);
  for (std::size_t k = 0; k < fit.r(); ++k) {
    const auto& c = fit.components[k];
    std::printf("component %zu: sigma^2 hat %.3f, u^(1) hat[1..3] = %.4f %.4f %.4f\n", k + 1,
                fit.variances.sigma_sq_hat[k], c.hat.factors[0][0], c.hat.factors[0][1], c.hat.factors[0][2]);
  }

  const Regime regime = auto_regime(data.dims(), data.n());
  for (std::size_t k = 0; k < fit.r(); ++k) {
    const auto ci = infer_linear_form(fit, LinearFormTarget::coordinate(k, 0, 10, 0), 0.05, regime);
    std::printf("regime %s, component %zu, <u^(1), e_1>: %.4f  95%% CI [%.4f, %.4f]\n", to_string(regime).c_str(),
                k + 1, ci.point, ci.lo, ci.hi);
  }
}
