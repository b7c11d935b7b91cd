#pragma once

// Confidence intervals and tests for linear forms <u_k^(q), v>.
//
// All three regimes studentize with
//
//   se = sqrt(s0^2/sk^2 + s0^4/sk^4) * || (I - e e^T) v || / sqrt(n),
//
// where e is the regime's own estimated direction (u_tilde for A, u_check
// for B and C) and s0^2, sk^2 are the plug-in variance estimates.

#include <cmath>
#include <limits>
#include <string>

#include "mpca/debias.hpp"

namespace mpca {

/// Upper alpha/2 quantile z of the standard normal, i.e. Phi(-z) = alpha/2.
/// Acklam's rational approximation followed by one Halley step against erfc.
inline double normal_quantile(double alpha_over_2) {
  if (!(alpha_over_2 > 0.0 && alpha_over_2 <= 0.5))
    throw InvalidInput("normal_quantile: argument must lie in (0, 0.5]");
  if (alpha_over_2 == 0.5) return 0.0;

  // Lower-tail quantile x of p = alpha/2, then z = -x.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  const double p = alpha_over_2;
  double x;
  if (p < 0.02425) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    const double q = p - 0.5;
    const double rr = q * q;
    x = (((((a[0] * rr + a[1]) * rr + a[2]) * rr + a[3]) * rr + a[4]) * rr + a[5]) * q /
        (((((b[0] * rr + b[1]) * rr + b[2]) * rr + b[3]) * rr + b[4]) * rr + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return -x;
}

/// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

enum class Regime { kAuto, kA, kB, kC };

inline std::string to_string(Regime r) {
  switch (r) {
    case Regime::kAuto: return "auto";
    case Regime::kA: return "A";
    case Regime::kB: return "B";
    case Regime::kC: return "C";
  }
  return "?";
}

inline Regime parse_regime(const std::string& s) {
  if (s == "auto") return Regime::kAuto;
  if (s == "A" || s == "a") return Regime::kA;
  if (s == "B" || s == "b") return Regime::kB;
  if (s == "C" || s == "c") return Regime::kC;
  throw InvalidInput("unknown regime '" + s + "'");
}

/// A if d < sqrt(n), B if d < n^(2/3), C otherwise, with d = max_q d_q.
inline Regime auto_regime(const Dims& dims, std::size_t n) {
  double d = 0.0;
  for (auto x : dims) d = std::max(d, static_cast<double>(x));
  const double nn = static_cast<double>(n);
  if (d < std::sqrt(nn)) return Regime::kA;
  if (d < std::pow(nn, 2.0 / 3.0)) return Regime::kB;
  return Regime::kC;
}

struct LinearFormTarget {
  std::size_t k = 0;  // component, 0-based
  std::size_t q = 0;  // mode, 0-based
  Vector v;

  static LinearFormTarget coordinate(std::size_t k, std::size_t q, std::size_t dim, std::size_t i) {
    return {k, q, UnitVector::basis(dim, i).coords()};
  }
};

struct InferenceResult {
  double point = 0.0;
  double se = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double z_stat = 0.0;
  bool reject = false;
  Regime regime = Regime::kA;
  /// se == 0: v lies along the estimated direction.
  bool degenerate = false;
};

inline InferenceResult infer_linear_form(const EstimateBundle& bundle, const LinearFormTarget& target,
                                         double alpha, Regime regime = Regime::kAuto) {
  detail::require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
  detail::require(target.k < bundle.r(), "target component out of range");
  detail::require(target.q < bundle.dims.size(), "target mode out of range");
  detail::require(static_cast<std::size_t>(target.v.size()) == bundle.dims[target.q],
                  "probe vector dimension mismatch");
  detail::require(target.v.norm() > 0.0, "probe vector must be nonzero");
  if (regime == Regime::kAuto) regime = auto_regime(bundle.dims, bundle.n);

  const auto& comp = bundle.components[target.k];
  const double s0 = bundle.variances.sigma0_sq_hat;
  if (target.k >= bundle.variances.sigma_sq_hat.size() ||
      !(bundle.variances.sigma_sq_hat[target.k] > 0.0))
    throw InferenceUnavailable("spike variance estimate of component " +
                               std::to_string(target.k + 1) + " is not positive");
  const double sk = bundle.variances.sigma_sq_hat[target.k];

  const Vector* dir = nullptr;
  double scale = 1.0;
  std::size_t n_eff = bundle.n;
  switch (regime) {
    case Regime::kA:
      detail::require(comp.tilde.size() == bundle.dims.size(), "regime A needs one-step updates");
      dir = &comp.tilde[target.q].coords();
      break;
    case Regime::kB:
      detail::require(bundle.has_split && !comp.check.empty(), "regime B needs cross-fitting");
      if (!comp.b_explicit.at(target.q))
        throw InferenceUnavailable("explicit bias factor unavailable");
      dir = &comp.check[target.q].coords();
      scale = 1.0 + *comp.b_explicit[target.q];
      n_eff = bundle.plan.n_split;
      break;
    case Regime::kC:
      detail::require(bundle.has_quarters, "regime C needs quarter estimates");
      if (!comp.b_empirical.at(target.q))
        throw InferenceUnavailable("nonpositive quarter overlap; empirical bias unavailable");
      dir = &comp.check[target.q].coords();
      scale = 1.0 + *comp.b_empirical[target.q];
      n_eff = bundle.plan.n_split;
      break;
    case Regime::kAuto:
      break;
  }

  InferenceResult out;
  out.regime = regime;
  const double proj = dir->dot(target.v);
  out.point = scale * proj;
  const double perp = (target.v - proj * (*dir)).norm();
  const double ratio = s0 / sk;
  out.se = std::sqrt(ratio + ratio * ratio) * perp / std::sqrt(static_cast<double>(n_eff));
  const double z = normal_quantile(alpha / 2.0);
  out.lo = out.point - z * out.se;
  out.hi = out.point + z * out.se;
  out.degenerate = !(out.se > 0.0);
  if (out.degenerate)
    out.z_stat = out.point == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), out.point);
  else
    out.z_stat = out.point / out.se;
  out.reject = std::abs(out.point) >= z * out.se;
  return out;
}

struct DensityOverlay {
  double mean = 0.0;
  double sd = 0.0;
};

/// Limiting normal law of a debiased linear-form estimate:
/// mean <u, v>, sd sqrt(s0^2/s^2 + s0^4/s^4) ||(I - u u^T) v|| / sqrt(n).
inline DensityOverlay theoretical_density(double sigma0, double sigma_k, const Vector& u_true_q,
                                          const Vector& v, std::size_t n) {
  detail::require(sigma_k > 0.0, "theoretical_density: sigma_k must be positive");
  detail::require(u_true_q.size() == v.size(), "theoretical_density: dimension mismatch");
  const double proj = u_true_q.dot(v);
  const double ratio = (sigma0 * sigma0) / (sigma_k * sigma_k);
  const double perp = (v - proj * u_true_q).norm();
  return {proj, std::sqrt(ratio + ratio * ratio) * perp / std::sqrt(static_cast<double>(n))};
}

}  // namespace mpca
