#pragma once

// Spiked covariance model
//
//   X = sum_k sigma_k theta_k U_k + sigma_0 E,
//
// with completely orthogonal rank-one components U_k, and the sample
// container shared by every estimator.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpca/random.hpp"
#include "mpca/tensor.hpp"

namespace mpca {

enum class NoiseDistribution { kStandardNormal, kCenteredPoisson };

inline std::string to_string(NoiseDistribution d) {
  return d == NoiseDistribution::kStandardNormal ? "normal" : "poisson";
}

inline NoiseDistribution parse_noise(const std::string& s) {
  if (s == "normal" || s == "gaussian" || s == "standard-normal")
    return NoiseDistribution::kStandardNormal;
  if (s == "poisson" || s == "centered-poisson") return NoiseDistribution::kCenteredPoisson;
  throw InvalidInput("unknown noise distribution '" + s + "'");
}

/// One draw with mean 0 and variance 1.
inline double draw(Rng& rng, NoiseDistribution dist) {
  switch (dist) {
    case NoiseDistribution::kStandardNormal:
      return rng.normal();
    case NoiseDistribution::kCenteredPoisson:
      return static_cast<double>(rng.poisson(1.0)) - 1.0;
  }
  return 0.0;
}

enum class ComponentsMode { kPaperSim, kRandom };

inline ComponentsMode parse_components_mode(const std::string& s) {
  if (s == "paper_sim" || s == "paper-sim") return ComponentsMode::kPaperSim;
  if (s == "random") return ComponentsMode::kRandom;
  throw InvalidInput("unknown components mode '" + s + "'");
}

inline std::string to_string(ComponentsMode m) {
  return m == ComponentsMode::kPaperSim ? "paper_sim" : "random";
}

/// Orthonormalizes the columns of `a` in place (modified Gram-Schmidt, two
/// passes). Throws if the columns are numerically dependent.
inline void orthonormalize_columns(Matrix& a) {
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index i = 0; i < j; ++i) a.col(j) -= a.col(i).dot(a.col(j)) * a.col(i);
    const double nrm = a.col(j).norm();
    if (!(nrm > 1e-12)) throw NumericalFailure("orthonormalization: dependent columns");
    a.col(j) /= nrm;
  }
}

/// Builds r completely orthogonal rank-one components.
///
/// kPaperSim reproduces the two-spike simulation design: mode 1 carries
/// (sqrt3/2, 1/2, 0, ...) and (-1/2, sqrt3/2, 0, ...), every other mode the
/// canonical basis vectors e_1, e_2. kRandom orthonormalizes a seeded Gaussian
/// d_q x r matrix per mode.
inline std::vector<RankOnePC> make_components(const Dims& dims, std::size_t r,
                                              ComponentsMode mode, std::uint64_t seed) {
  detail::require(!dims.empty(), "dims must be nonempty");
  for (auto d : dims) {
    detail::require(d >= 1, "dims must be positive");
    detail::require(r <= d, "r = " + std::to_string(r) + " exceeds a mode dimension " +
                                dims_to_string(dims));
  }
  std::vector<RankOnePC> comps(r);
  if (mode == ComponentsMode::kPaperSim) {
    detail::require(r <= 2, "paper_sim components are defined for r <= 2");
    for (auto d : dims) detail::require(d >= 2, "paper_sim components need every d_q >= 2");
    const double c = std::sqrt(3.0) / 2.0;
    for (std::size_t k = 0; k < r; ++k) {
      for (std::size_t q = 0; q < dims.size(); ++q) {
        Vector v = Vector::Zero(static_cast<Eigen::Index>(dims[q]));
        if (q == 0) {
          if (k == 0) {
            v(0) = c;
            v(1) = 0.5;
          } else {
            v(0) = -0.5;
            v(1) = c;
          }
        } else {
          v(static_cast<Eigen::Index>(k)) = 1.0;
        }
        comps[k].factors.push_back(UnitVector::normalized(v));
      }
    }
  } else {
    Rng rng(seed);
    std::vector<Matrix> bases;
    for (auto d : dims) {
      Matrix g(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(r));
      for (Eigen::Index j = 0; j < g.cols(); ++j)
        for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = rng.normal();
      orthonormalize_columns(g);
      bases.push_back(std::move(g));
    }
    for (std::size_t k = 0; k < r; ++k)
      for (const auto& b : bases)
        comps[k].factors.push_back(UnitVector::normalized(b.col(static_cast<Eigen::Index>(k))));
  }
  return comps;
}

class SpikedModel {
 public:
  SpikedModel(Dims dims, std::vector<double> sigma, double sigma0,
               std::vector<RankOnePC> components)
      : dims_(std::move(dims)),
        sigma_(std::move(sigma)),
        sigma0_(sigma0),
        components_(std::move(components)) {
    detail::require(!dims_.empty(), "model dims must be nonempty");
    detail::require(sigma_.size() == components_.size(),
                    "sigma list length must equal the number of components");
    detail::require(sigma0_ >= 0.0, "sigma0 must be nonnegative");
    for (std::size_t k = 0; k < sigma_.size(); ++k) {
      detail::require(sigma_[k] > 0.0, "spike scales must be positive");
      if (k) detail::require(sigma_[k] <= sigma_[k - 1], "spike scales must be non-increasing");
      detail::require(components_[k].dims() == dims_, "component dims mismatch");
    }
    for (auto d : dims_) detail::require(r() <= d, "r exceeds a mode dimension");
    for (std::size_t k = 0; k < r(); ++k)
      for (std::size_t l = 0; l < k; ++l)
        for (std::size_t q = 0; q < dims_.size(); ++q)
          detail::require(std::abs(components_[k].factors[q].coords().dot(
                              components_[l].factors[q].coords())) <= 1e-12,
                          "components are not completely orthogonal");
    for (std::size_t k = 0; k < r(); ++k) components_[k].value = eigenvalue(k);
  }

  const Dims& dims() const { return dims_; }
  std::size_t order() const { return dims_.size(); }
  std::size_t r() const { return components_.size(); }
  const std::vector<double>& sigma() const { return sigma_; }
  double sigma0() const { return sigma0_; }
  const std::vector<RankOnePC>& components() const { return components_; }

  /// lambda_k = var(<X, U_k>) = sigma_k^2 + sigma_0^2.
  double eigenvalue(std::size_t k) const {
    return sigma_.at(k) * sigma_.at(k) + sigma0_ * sigma0_;
  }

 private:
  Dims dims_;
  std::vector<double> sigma_;
  double sigma0_;
  std::vector<RankOnePC> components_;
};

/// n observations of a common shape, stored contiguously observation-major
/// (i.e. the stacked (n, d_1, ..., d_p) tensor in row-major order).
class SampleSet {
 public:
  SampleSet(Dims dims, std::size_t n, std::vector<double> stacked)
      : dims_(std::move(dims)), n_(n), data_(std::move(stacked)) {
    detail::require(!dims_.empty(), "sample dims must be nonempty");
    for (auto d : dims_) detail::require(d >= 1, "sample dims must be positive");
    detail::require(data_.size() == n_ * obs_size(), "stacked data length mismatch");
  }

  explicit SampleSet(const std::vector<Tensor>& observations) {
    detail::require(!observations.empty(), "empty observation list");
    dims_ = observations.front().dims();
    n_ = observations.size();
    data_.reserve(n_ * obs_size());
    for (const auto& t : observations) {
      detail::require(t.dims() == dims_, "observations must share dims");
      data_.insert(data_.end(), t.data().begin(), t.data().end());
    }
  }

  std::size_t n() const { return n_; }
  const Dims& dims() const { return dims_; }
  std::size_t order() const { return dims_.size(); }
  std::size_t obs_size() const { return dims_product(dims_); }

  std::span<const double> observation_data(std::size_t i) const {
    return std::span<const double>(data_).subspan(i * obs_size(), obs_size());
  }
  Tensor observation(std::size_t i) const {
    auto s = observation_data(i);
    return Tensor(dims_, std::vector<double>(s.begin(), s.end()));
  }
  std::span<const double> stacked() const { return data_; }

  /// Latent factors theta (n x r), retained for synthetic data.
  const std::optional<Matrix>& factors() const { return factors_; }
  /// Noise tensors E_i, stacked like the observations.
  const std::optional<std::vector<double>>& noise() const { return noise_; }

  void set_latent(Matrix theta, std::vector<double> noise) {
    detail::require(static_cast<std::size_t>(theta.rows()) == n_, "theta rows mismatch");
    detail::require(noise.size() == data_.size(), "noise length mismatch");
    factors_ = std::move(theta);
    noise_ = std::move(noise);
  }

 private:
  Dims dims_;
  std::size_t n_ = 0;
  std::vector<double> data_;
  std::optional<Matrix> factors_;
  std::optional<std::vector<double>> noise_;
};

/// Draws n observations. Per observation the r factors are drawn first, then
/// the noise entries in row-major order.
inline SampleSet sample(const SpikedModel& model, std::size_t n, NoiseDistribution dist,
                        std::uint64_t seed, bool keep_latent = true) {
  detail::require(n >= 1, "sample size must be positive");
  const std::size_t dsize = dims_product(model.dims());
  const std::size_t r = model.r();
  std::vector<Vector> spikes;
  for (std::size_t k = 0; k < r; ++k)
    spikes.push_back(model.sigma()[k] * Vector(model.components()[k].to_tensor().as_vector()));

  Rng rng(seed);
  std::vector<double> data(n * dsize);
  std::vector<double> noise;
  Matrix theta(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(r));
  if (keep_latent) noise.resize(n * dsize);
  const double s0 = model.sigma0();
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Map<Vector> x(data.data() + i * dsize, static_cast<Eigen::Index>(dsize));
    x.setZero();
    for (std::size_t k = 0; k < r; ++k) {
      const double t = draw(rng, dist);
      theta(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = t;
      x += t * spikes[k];
    }
    for (std::size_t j = 0; j < dsize; ++j) {
      const double e = draw(rng, dist);
      if (keep_latent) noise[i * dsize + j] = e;
      x(static_cast<Eigen::Index>(j)) += s0 * e;
    }
  }
  SampleSet out(model.dims(), n, std::move(data));
  if (keep_latent) out.set_latent(std::move(theta), std::move(noise));
  return out;
}

/// JSON-serializable model description:
/// {dims, r, sigma, sigma0, components_mode, seed, noise}.
struct ModelConfig {
  Dims dims{10, 10};
  std::size_t r = 2;
  std::vector<double> sigma{2.0, 2.0};
  double sigma0 = 1.0;
  ComponentsMode components_mode = ComponentsMode::kPaperSim;
  std::uint64_t seed = 0;
  NoiseDistribution noise = NoiseDistribution::kStandardNormal;

  SpikedModel build() const {
    return SpikedModel(dims, sigma, sigma0, make_components(dims, r, components_mode, seed));
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"dims", c.dims},
                     {"r", c.r},
                     {"sigma", c.sigma},
                     {"sigma0", c.sigma0},
                     {"components_mode", to_string(c.components_mode)},
                     {"seed", c.seed},
                     {"noise", to_string(c.noise)}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (j.contains("dims")) c.dims = j.at("dims").get<Dims>();
  if (j.contains("r")) c.r = j.at("r").get<std::size_t>();
  if (j.contains("sigma")) c.sigma = j.at("sigma").get<std::vector<double>>();
  if (j.contains("sigma0")) c.sigma0 = j.at("sigma0").get<double>();
  if (j.contains("components_mode"))
    c.components_mode = parse_components_mode(j.at("components_mode").get<std::string>());
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("noise")) c.noise = parse_noise(j.at("noise").get<std::string>());
}

}  // namespace mpca
