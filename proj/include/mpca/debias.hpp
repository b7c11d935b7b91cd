#pragma once

// Bias corrections for the sample multiway PCs.
//
//  * one-step update:   u_tilde^(q) = leading eigenvector of
//                       Sigma_hat(u_hat^(1), ..., ., ..., u_hat^(p), same)
//                       without any deflation.
//  * cross-fitting:     u_check^(q),[h] = leading eigenvector of half h's
//                       covariance contracted with the other half's estimates,
//                       u_check^(q) = normalized sum over h.
//  * bias factors:      b   = sqrt(1 + d_q/n (s0^2/s^2 + s0^4/s^4)) - 1,
//                       b_hat from a further split of each half into quarters.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mpca/covariance.hpp"
#include "mpca/estimator.hpp"
#include "mpca/random.hpp"

namespace mpca {

/// Seeded random split of 0..n-1 into halves, and of each half into quarters.
/// Halves are the even/odd positions of a shuffled index list; an odd
/// trailing observation is dropped. Quarters are formed the same way inside
/// each half.
struct SplitPlan {
  std::vector<std::size_t> permutation;
  std::array<std::vector<std::size_t>, 2> halves;
  std::array<std::array<std::vector<std::size_t>, 2>, 2> quarters;
  /// Observations used by the halves (n rounded down to even).
  std::size_t n_split = 0;
  /// Observations used by the quarters (n rounded down to a multiple of 4).
  std::size_t n_quarter = 0;

  static SplitPlan make(std::size_t n, std::uint64_t seed) {
    detail::require(n >= 2, "sample splitting needs at least two observations");
    SplitPlan plan;
    Rng rng(seed);
    plan.permutation = rng.permutation(n);
    plan.n_split = n - n % 2;
    for (std::size_t i = 0; i < plan.n_split; ++i)
      plan.halves[i % 2].push_back(plan.permutation[i]);
    plan.fill_quarters();
    return plan;
  }

  /// Plan with caller-chosen halves (no shuffle); used for controlled tests.
  static SplitPlan from_halves(std::vector<std::size_t> first, std::vector<std::size_t> second) {
    detail::require(!first.empty() && first.size() == second.size(),
                    "halves must be nonempty and of equal size");
    SplitPlan plan;
    plan.halves = {std::move(first), std::move(second)};
    plan.n_split = 2 * plan.halves[0].size();
    plan.fill_quarters();
    return plan;
  }

 private:
  void fill_quarters() {
    const std::size_t m = halves[0].size() - halves[0].size() % 2;
    for (std::size_t h = 0; h < 2; ++h) {
      quarters[h][0].clear();
      quarters[h][1].clear();
      for (std::size_t i = 0; i < m; ++i) quarters[h][i % 2].push_back(halves[h][i]);
    }
    n_quarter = 2 * m;
  }
};

struct ComponentEstimates {
  /// Full-data sample PC.
  RankOnePC hat;
  /// One-step updates, one per mode.
  std::vector<UnitVector> tilde;
  /// Half-sample PCs after relabeling and sign alignment.
  std::array<RankOnePC, 2> hat_half;
  /// Cross-fitted vectors per mode: check_halves[q][h].
  std::vector<std::array<UnitVector, 2>> check_halves;
  std::vector<UnitVector> check;
  /// Quarter vectors per mode: quarters[q][h][j].
  std::vector<std::array<std::array<UnitVector, 2>, 2>> quarters;
  /// <u^[h][1], u^[h][2]> per mode.
  std::vector<std::array<double, 2>> quarter_inner;
  /// Plug-in explicit factor per mode (absent when sigma_k^2 was clipped).
  std::vector<std::optional<double>> b_explicit;
  /// Empirical factor per mode (absent when a quarter overlap is <= 0).
  std::vector<std::optional<double>> b_empirical;
};

struct EstimateBundle {
  Dims dims;
  std::size_t n = 0;
  std::vector<ComponentEstimates> components;
  VarianceEstimates variances;

  bool has_split = false;
  bool has_quarters = false;
  SplitPlan plan;
  /// relabel[h][k] = original index (in half h's fit) of the component now at k.
  std::array<std::vector<std::size_t>, 2> relabel;
  /// Per-mode sin angles between each relabeled half PC and the full PC.
  std::array<std::vector<std::vector<double>>, 2> relabel_mode_angles;
  std::vector<std::string> notes;

  std::size_t r() const { return components.size(); }
};

// ---------------------------------------------------------------------------

/// Mode-q leading eigenvector of the view's contracted matrix at `fixed`,
/// oriented to have a nonnegative inner product with `orient`.
inline UnitVector contracted_leading(const CovarianceView& view, const RankOnePC& fixed,
                                     std::size_t q, const Vector& orient) {
  const Matrix m = contracted_matrix(view.without_projectors(), other_factors(fixed, q), q);
  EigenPair ep;
  try {
    ep = leading_eigenvector(m, &orient);
  } catch (const NumericalFailure&) {
    throw NumericalFailure("contracted matrix is numerically zero in mode " + std::to_string(q));
  }
  if (ep.vector.dot(orient) < 0.0) ep.vector = -ep.vector;
  return UnitVector::normalized(ep.vector);
}

/// One-step update of a fitted component: re-solves each mode's eigenproblem
/// with no orthogonality constraint, other modes fixed at the estimate.
inline std::vector<UnitVector> one_step_update(const CovarianceView& view, const RankOnePC& hat_u_k) {
  detail::require(hat_u_k.dims() == view.dims(), "one_step_update: dims mismatch");
  std::vector<UnitVector> out;
  for (std::size_t q = 0; q < view.order(); ++q)
    out.push_back(contracted_leading(view, hat_u_k, q, hat_u_k.factors[q].coords()));
  return out;
}

inline std::vector<UnitVector> one_step_update(const SampleSet& data, const RankOnePC& hat_u_k) {
  return one_step_update(CovarianceView(data), hat_u_k);
}

/// Reorders `estimates` in place so that position k holds the not-yet-used
/// estimate with the smallest tensor sin angle to reference[k]; returns the
/// original index now stored at each position.
inline std::vector<std::size_t> relabel_against(const std::vector<RankOnePC>& reference,
                                                std::vector<RankOnePC>& estimates) {
  detail::require(reference.size() == estimates.size(), "relabel: component count mismatch");
  std::vector<std::size_t> origin(estimates.size());
  for (std::size_t k = 0; k < origin.size(); ++k) origin[k] = k;
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    std::size_t arg = k;
    double best = sin_angle(estimates[k], reference[k]);
    for (std::size_t l = k + 1; l < estimates.size(); ++l) {
      const double s = sin_angle(estimates[l], reference[k]);
      if (s < best) {
        best = s;
        arg = l;
      }
    }
    std::swap(estimates[k], estimates[arg]);
    std::swap(origin[k], origin[arg]);
  }
  return origin;
}

/// Flips mode vectors of `est` so that <est^(q), ref^(q)> >= 0 for every q.
inline void align_signs(RankOnePC& est, const RankOnePC& ref) {
  for (std::size_t q = 0; q < est.order(); ++q)
    if (est.factors[q].coords().dot(ref.factors[q].coords()) < 0.0)
      est.factors[q] = -est.factors[q];
}

/// b = sqrt(1 + (d_q / n)(s0^2/s^2 + s0^4/s^4)) - 1.
inline double explicit_bias(std::size_t d_q, std::size_t n, double sigma0_sq, double sigma_k_sq) {
  if (!(sigma_k_sq > 0.0))
    throw InferenceUnavailable("explicit_bias: spike variance must be positive");
  detail::require(n >= 1 && sigma0_sq >= 0.0, "explicit_bias: invalid arguments");
  const double ratio = sigma0_sq / sigma_k_sq;
  return std::sqrt(1.0 + static_cast<double>(d_q) / static_cast<double>(n) *
                             (ratio + ratio * ratio)) -
         1.0;
}

/// b_hat = ||c1 + c2|| / (sqrt<q11, q12> + sqrt<q21, q22>) - 1,
/// after orienting c2 along c1 and each quarter along its own half.
/// Returns nullopt when a quarter overlap is not positive.
inline std::optional<double> empirical_bias_from(const Vector& c1, Vector c2, Vector q11,
                                                 Vector q12, Vector q21, Vector q22,
                                                 std::array<double, 2>* overlaps = nullptr) {
  if (c2.dot(c1) < 0.0) c2 = -c2;
  if (q11.dot(c1) < 0.0) q11 = -q11;
  if (q12.dot(c1) < 0.0) q12 = -q12;
  if (q21.dot(c2) < 0.0) q21 = -q21;
  if (q22.dot(c2) < 0.0) q22 = -q22;
  const double i1 = q11.dot(q12);
  const double i2 = q21.dot(q22);
  if (overlaps) *overlaps = {i1, i2};
  if (!(i1 > 0.0) || !(i2 > 0.0)) return std::nullopt;
  return (c1 + c2).norm() / (std::sqrt(i1) + std::sqrt(i2)) - 1.0;
}

// ---------------------------------------------------------------------------
// Bundle construction

/// Fits the full sample and both halves, relabels every half's components
/// against the full-data ones by tensor sin angle and orients each half mode
/// vector along the full-data one. All three fits use the same AlsConfig.
inline EstimateBundle split_fit(const SampleSet& data, std::size_t r, const AlsConfig& cfg,
                                const SplitPlan& plan) {
  EstimateBundle b;
  b.dims = data.dims();
  b.n = data.n();
  b.plan = plan;
  b.has_split = true;
  if (plan.n_split < data.n())
    b.notes.push_back("odd sample size: dropped one observation for splitting (n_split = " +
                      std::to_string(plan.n_split) + ")");

  const auto full = fit_mpca(CovarianceView(data), r, cfg);
  b.components.resize(r);
  for (std::size_t k = 0; k < r; ++k) b.components[k].hat = full[k];

  for (std::size_t h = 0; h < 2; ++h) {
    auto half = fit_mpca(CovarianceView(data, plan.halves[h]), r, cfg);
    b.relabel[h] = relabel_against(full, half);
    b.relabel_mode_angles[h].resize(r);
    for (std::size_t k = 0; k < r; ++k) {
      align_signs(half[k], full[k]);
      for (std::size_t q = 0; q < data.order(); ++q)
        b.relabel_mode_angles[h][k].push_back(
            sin_angle(half[k].factors[q], full[k].factors[q]));
      b.components[k].hat_half[h] = half[k];
    }
  }
  return b;
}

inline EstimateBundle split_fit(const SampleSet& data, std::size_t r, const AlsConfig& cfg,
                                std::uint64_t split_seed) {
  return split_fit(data, r, cfg, SplitPlan::make(data.n(), split_seed));
}

/// Cross-fitted vectors: half 1's covariance contracted with half 2's
/// estimates and vice versa, oriented consistently and averaged.
inline void cross_fit_check_u(EstimateBundle& bundle, const SampleSet& data) {
  detail::require(bundle.has_split, "cross_fit_check_u: split_fit has not been run");
  const CovarianceView h1(data, bundle.plan.halves[0]);
  const CovarianceView h2(data, bundle.plan.halves[1]);
  for (auto& c : bundle.components) {
    c.check_halves.clear();
    c.check.clear();
    for (std::size_t q = 0; q < data.order(); ++q) {
      const Vector& ref = c.hat.factors[q].coords();
      UnitVector a = contracted_leading(h1, c.hat_half[1], q, ref);
      UnitVector b = contracted_leading(h2, c.hat_half[0], q, a.coords());
      c.check.push_back(UnitVector::normalized(a.coords() + b.coords()));
      c.check_halves.push_back({std::move(a), std::move(b)});
    }
  }
}

/// Plug-in explicit bias factors from the bundle's variance estimates,
/// using the number of observations that enter the cross-fitted estimate.
inline void fill_explicit_bias(EstimateBundle& bundle) {
  const std::size_t n_eff = bundle.has_split ? bundle.plan.n_split : bundle.n;
  for (std::size_t k = 0; k < bundle.r(); ++k) {
    auto& c = bundle.components[k];
    c.b_explicit.assign(bundle.dims.size(), std::nullopt);
    if (k >= bundle.variances.sigma_sq_hat.size()) continue;
    const double s2 = bundle.variances.sigma_sq_hat[k];
    if (!(s2 > 0.0)) continue;
    for (std::size_t q = 0; q < bundle.dims.size(); ++q)
      c.b_explicit[q] = explicit_bias(bundle.dims[q], n_eff, bundle.variances.sigma0_sq_hat, s2);
  }
}

/// Quarter estimates and the empirical factor b_hat. Half 1's quarters are
/// contracted with half 2's estimates and half 2's quarters with half 1's.
inline void empirical_bias(EstimateBundle& bundle, const SampleSet& data) {
  detail::require(bundle.has_split, "empirical_bias: split_fit has not been run");
  if (bundle.components.empty() || bundle.components.front().check.empty())
    cross_fit_check_u(bundle, data);
  if (bundle.plan.n_quarter < 4)
    throw InvalidInput("empirical_bias: too few observations for quarter splitting");
  if (bundle.plan.n_quarter < bundle.plan.n_split)
    bundle.notes.push_back("half size odd: quarters use n = " +
                           std::to_string(bundle.plan.n_quarter) + " observations");
  std::array<std::array<CovarianceView, 2>, 2> views = {
      std::array<CovarianceView, 2>{CovarianceView(data, bundle.plan.quarters[0][0]),
                                    CovarianceView(data, bundle.plan.quarters[0][1])},
      std::array<CovarianceView, 2>{CovarianceView(data, bundle.plan.quarters[1][0]),
                                    CovarianceView(data, bundle.plan.quarters[1][1])}};
  for (auto& c : bundle.components) {
    c.quarters.clear();
    c.quarter_inner.clear();
    c.b_empirical.clear();
    for (std::size_t q = 0; q < data.order(); ++q) {
      std::array<std::array<UnitVector, 2>, 2> qs;
      for (std::size_t h = 0; h < 2; ++h) {
        const RankOnePC& fixed = c.hat_half[1 - h];
        const Vector& orient = c.check_halves[q][h].coords();
        for (std::size_t j = 0; j < 2; ++j)
          qs[h][j] = contracted_leading(views[h][j], fixed, q, orient);
      }
      std::array<double, 2> overlaps{};
      c.b_empirical.push_back(empirical_bias_from(
          c.check_halves[q][0].coords(), c.check_halves[q][1].coords(), qs[0][0].coords(),
          qs[0][1].coords(), qs[1][0].coords(), qs[1][1].coords(), &overlaps));
      c.quarter_inner.push_back(overlaps);
      c.quarters.push_back(std::move(qs));
    }
  }
  bundle.has_quarters = true;
}

struct BundleOptions {
  bool split = true;
  bool quarters = true;
  std::uint64_t split_seed = 0;
};

/// Full pipeline: sample PCs, one-step updates, variance estimates and, when
/// requested, cross-fitting with both bias factors.
inline EstimateBundle estimate_bundle(const SampleSet& data, std::size_t r, const AlsConfig& cfg,
                                      const BundleOptions& opts = {}) {
  EstimateBundle b;
  if (opts.split) {
    b = split_fit(data, r, cfg, opts.split_seed);
  } else {
    b.dims = data.dims();
    b.n = data.n();
    const auto full = fit_mpca(CovarianceView(data), r, cfg);
    b.components.resize(r);
    for (std::size_t k = 0; k < r; ++k) b.components[k].hat = full[k];
  }
  const CovarianceView view(data);
  std::vector<RankOnePC> hats;
  for (auto& c : b.components) {
    c.tilde = one_step_update(view, c.hat);
    hats.push_back(c.hat);
  }
  b.variances = estimate_variances(view, hats);
  for (std::size_t k = 0; k < r; ++k)
    if (b.variances.clipped[k])
      b.notes.push_back("spike variance of component " + std::to_string(k + 1) +
                        " clipped at 0");
  if (opts.split) {
    cross_fit_check_u(b, data);
    fill_explicit_bias(b);
    if (opts.quarters) empirical_bias(b, data);
  }
  return b;
}

}  // namespace mpca
