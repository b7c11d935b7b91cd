#pragma once

// Access to the sample covariance operator
//
//   Sigma_hat = (1/n) sum_i X_i (x) X_i
//
// through contractions against the observations only. Sigma_hat is never
// materialized; every query costs O(n * prod(d_q)).

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mpca/linalg.hpp"
#include "mpca/spiked_model.hpp"
#include "mpca/tensor.hpp"

namespace mpca {

/// Read-only view of the sample covariance of a subset of observations,
/// optionally deflated by per-mode projectors P^(q):
///
///   Sigma_check(w, v) = Sigma_hat(P w^(1), ..., P w^(p), P v^(1), ..., P v^(p)).
///
/// The view refers to the SampleSet; the SampleSet must outlive it.
class CovarianceView {
 public:
  explicit CovarianceView(const SampleSet& data) : data_(&data) {
    rows_.resize(data.n());
    for (std::size_t i = 0; i < rows_.size(); ++i) rows_[i] = i;
  }

  CovarianceView(const SampleSet& data, std::vector<std::size_t> rows)
      : data_(&data), rows_(std::move(rows)) {
    detail::require(!rows_.empty(), "covariance view over an empty subset");
    for (auto i : rows_) detail::require(i < data.n(), "covariance view row out of range");
  }

  /// Returns a copy of this view deflated by explicit projectors, one per
  /// mode. Each must be symmetric (1e-10) and idempotent (1e-8).
  CovarianceView with_projectors(std::vector<Matrix> projectors) const {
    detail::require(projectors.size() == order(), "one projector per mode is required");
    for (std::size_t q = 0; q < order(); ++q) {
      const auto& p = projectors[q];
      const auto d = static_cast<Eigen::Index>(dims()[q]);
      detail::require(p.rows() == d && p.cols() == d, "projector dimension mismatch");
      detail::require((p - p.transpose()).cwiseAbs().maxCoeff() <= 1e-10,
                      "projector is not symmetric");
      detail::require((p * p - p).cwiseAbs().maxCoeff() <= 1e-8, "projector is not idempotent");
    }
    CovarianceView out = *this;
    out.projectors_ = std::move(projectors);
    return out;
  }

  /// Deflates by the orthocomplement of span{u_l^(q)} in every mode.
  CovarianceView deflated(const std::vector<RankOnePC>& removed) const {
    if (removed.empty()) return without_projectors();
    std::vector<Matrix> projectors;
    for (std::size_t q = 0; q < order(); ++q) {
      const auto d = static_cast<Eigen::Index>(dims()[q]);
      Matrix basis(d, static_cast<Eigen::Index>(removed.size()));
      for (std::size_t l = 0; l < removed.size(); ++l) {
        detail::require(removed[l].order() == order() && removed[l].factors[q].dim() == dims()[q],
                        "deflation component dims mismatch");
        basis.col(static_cast<Eigen::Index>(l)) = removed[l].factors[q].coords();
      }
      projectors.push_back(complement_projector(d, basis));
    }
    CovarianceView out = *this;
    out.projectors_ = std::move(projectors);
    return out;
  }

  CovarianceView without_projectors() const {
    CovarianceView out = *this;
    out.projectors_.reset();
    return out;
  }

  const SampleSet& data() const { return *data_; }
  const std::vector<std::size_t>& rows() const { return rows_; }
  std::size_t n() const { return rows_.size(); }
  const Dims& dims() const { return data_->dims(); }
  std::size_t order() const { return data_->order(); }
  bool deflating() const { return projectors_.has_value(); }
  const std::optional<std::vector<Matrix>>& projectors() const { return projectors_; }

  /// P^(q) w, or w itself when the view is not deflated.
  Vector project(std::size_t q, const Vector& w) const {
    if (!projectors_) return w;
    return (*projectors_)[q] * w;
  }

 private:
  const SampleSet* data_;
  std::vector<std::size_t> rows_;
  std::optional<std::vector<Matrix>> projectors_;
};

namespace detail {

inline void check_directions(const CovarianceView& view, const std::vector<Vector>& ws,
                             const char* what) {
  require(ws.size() == view.order(), std::string(what) + ": expected one direction per mode");
  for (std::size_t q = 0; q < ws.size(); ++q)
    require(static_cast<std::size_t>(ws[q].size()) == view.dims()[q],
            std::string(what) + ": direction dimension mismatch in mode " + std::to_string(q));
}

/// <X_i, (x)_q ws[q]> for every row of the view, after projection.
inline Vector projections_onto(const CovarianceView& view, const std::vector<Vector>& ws) {
  std::vector<Vector> projected;
  for (std::size_t q = 0; q < ws.size(); ++q) projected.push_back(view.project(q, ws[q]));
  const Vector k = kron(projected);
  Vector out(static_cast<Eigen::Index>(view.n()));
  const auto& data = view.data();
  for (std::size_t i = 0; i < view.n(); ++i) {
    auto obs = data.observation_data(view.rows()[i]);
    out(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Vector>(obs.data(), static_cast<Eigen::Index>(obs.size())).dot(k);
  }
  return out;
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Rows z_i = X_i contracted with `fixed` on every mode except q
/// (fixed[q] is ignored). Returns an n x d_q matrix.
inline Matrix contract_all_but(const CovarianceView& view, std::size_t q,
                               const std::vector<Vector>& fixed) {
  const auto& dims = view.dims();
  std::vector<Vector> pre_vecs(fixed.begin(), fixed.begin() + static_cast<std::ptrdiff_t>(q));
  std::vector<Vector> post_vecs(fixed.begin() + static_cast<std::ptrdiff_t>(q) + 1, fixed.end());
  const Vector kpre = kron(pre_vecs);
  const Vector kpost = kron(post_vecs);
  const auto dq = static_cast<Eigen::Index>(dims[q]);
  const auto pre = kpre.size();
  const auto post = kpost.size();

  Matrix z(static_cast<Eigen::Index>(view.n()), dq);
  Vector t(pre * dq);
  for (std::size_t i = 0; i < view.n(); ++i) {
    auto obs = view.data().observation_data(view.rows()[i]);
    const auto row = static_cast<Eigen::Index>(i);
    if (post == 1) {
      Eigen::Map<const RowMatrix> folded(obs.data(), pre, dq);
      z.row(row).noalias() = kpost(0) * (kpre.transpose() * folded);
      continue;
    }
    Eigen::Map<const RowMatrix> block(obs.data(), pre * dq, post);
    t.noalias() = block * kpost;
    if (pre == 1) {
      z.row(row) = kpre(0) * t.transpose();
      continue;
    }
    Eigen::Map<const RowMatrix> folded(t.data(), pre, dq);
    z.row(row).noalias() = kpre.transpose() * folded;
  }
  return z;
}

}  // namespace detail

/// Sigma_check(ws, vs) = (1/n) sum_i <X_i, (x) P ws> <X_i, (x) P vs>.
inline double bilinear(const CovarianceView& view, const std::vector<Vector>& ws,
                       const std::vector<Vector>& vs) {
  detail::check_directions(view, ws, "bilinear");
  detail::check_directions(view, vs, "bilinear");
  const Vector a = detail::projections_onto(view, ws);
  const Vector b = detail::projections_onto(view, vs);
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) s += a(i) * b(i);
  return s / static_cast<double>(view.n());
}

inline double bilinear(const CovarianceView& view, const RankOnePC& w, const RankOnePC& v) {
  std::vector<Vector> ws, vs;
  for (const auto& f : w.factors) ws.push_back(f.coords());
  for (const auto& f : v.factors) vs.push_back(f.coords());
  return bilinear(view, ws, vs);
}

/// Quadratic form Sigma_check(w, w) at a rank-one direction.
inline double rayleigh(const CovarianceView& view, const RankOnePC& w) {
  return bilinear(view, w, w);
}

/// The d_q x d_q matrix Sigma_check(f_1, ..., ., ..., f_p, f_1, ..., ., ..., f_p)
/// = P^(q) [(1/n) sum_i z_i z_i^T] P^(q), where z_i contracts the projected
/// observation with the fixed directions on every mode but q.
///
/// `fixed` holds the p-1 directions for the modes other than q, in mode order.
inline Matrix contracted_matrix(const CovarianceView& view, const std::vector<Vector>& fixed,
                                std::size_t q) {
  detail::require(q < view.order(), "contracted_matrix: mode out of range");
  detail::require(fixed.size() + 1 == view.order(),
                  "contracted_matrix: expected p-1 fixed directions");
  std::vector<Vector> full;
  for (std::size_t m = 0, j = 0; m < view.order(); ++m) {
    if (m == q) {
      full.push_back(Vector::Zero(static_cast<Eigen::Index>(view.dims()[q])));
      continue;
    }
    detail::require(static_cast<std::size_t>(fixed[j].size()) == view.dims()[m],
                    "contracted_matrix: fixed direction dimension mismatch in mode " +
                        std::to_string(m));
    full.push_back(view.project(m, fixed[j++]));
  }
  const Matrix z = detail::contract_all_but(view, q, full);
  Matrix m = Matrix::Zero(z.cols(), z.cols());
  m.selfadjointView<Eigen::Lower>().rankUpdate(z.transpose(), 1.0 / static_cast<double>(view.n()));
  m.triangularView<Eigen::StrictlyUpper>() = m.transpose();
  if (view.projectors()) {
    const Matrix& p = (*view.projectors())[q];
    Matrix pm = p * m * p;
    m = 0.5 * (pm + pm.transpose());
  }
  return m;
}

/// Mode-q directions of `pc` other than q, in mode order.
inline std::vector<Vector> other_factors(const RankOnePC& pc, std::size_t q) {
  std::vector<Vector> out;
  for (std::size_t m = 0; m < pc.order(); ++m)
    if (m != q) out.push_back(pc.factors[m].coords());
  return out;
}

// ---------------------------------------------------------------------------
// Variance estimates

struct SpikeVarianceEstimate {
  double value = 0.0;
  bool clipped = false;
};

struct VarianceEstimates {
  double sigma0_sq_hat = 0.0;
  std::vector<double> sigma_sq_hat;
  std::vector<bool> clipped;
};

/// Noise level from the residual after removing the fitted span in every mode:
///
///   sigma0^2 = 1 / (n prod_q (d_q - r)) sum_i || X_i x_1 P^(1) ... x_p P^(p) ||_F^2,
///
/// P^(q) projecting onto the orthocomplement of span{u_l^(q) : l <= r}. This is
/// the trace of the fully deflated covariance divided by its rank.
inline double estimate_sigma0_sq(const CovarianceView& view, const std::vector<RankOnePC>& fitted) {
  const auto& dims = view.dims();
  const std::size_t r = fitted.size();
  double denom = 1.0;
  for (auto d : dims) {
    detail::require(r < d, "estimate_sigma0_sq: r must be smaller than every d_q");
    denom *= static_cast<double>(d - r);
  }
  // Orthonormal basis of the fitted span per mode.
  std::vector<Matrix> bases;
  for (std::size_t q = 0; q < dims.size(); ++q) {
    Matrix b(static_cast<Eigen::Index>(dims[q]), static_cast<Eigen::Index>(r));
    for (std::size_t l = 0; l < r; ++l) {
      detail::require(fitted[l].order() == dims.size() && fitted[l].factors[q].dim() == dims[q],
                      "estimate_sigma0_sq: component dims mismatch");
      b.col(static_cast<Eigen::Index>(l)) = fitted[l].factors[q].coords();
    }
    if (r) orthonormalize_columns(b);
    bases.push_back(std::move(b));
  }

  const std::size_t dsize = dims_product(dims);
  std::vector<double> work(dsize);
  double total = 0.0;
  for (auto row : view.rows()) {
    auto obs = view.data().observation_data(row);
    std::copy(obs.begin(), obs.end(), work.begin());
    for (std::size_t q = 0; q < dims.size() && r; ++q) {
      const auto dq = static_cast<Eigen::Index>(dims[q]);
      const auto pre = static_cast<Eigen::Index>(dims_product(std::span(dims).first(q)));
      const auto post = static_cast<Eigen::Index>(dims_product(std::span(dims).subspan(q + 1)));
      const Matrix& b = bases[q];
      for (Eigen::Index a = 0; a < pre; ++a) {
        Eigen::Map<detail::RowMatrix> block(work.data() + a * dq * post, dq, post);
        const detail::RowMatrix coeff = b.transpose() * block;
        block.noalias() -= b * coeff;
      }
    }
    total += Eigen::Map<const Vector>(work.data(), static_cast<Eigen::Index>(dsize)).squaredNorm();
  }
  return total / (static_cast<double>(view.n()) * denom);
}

inline double estimate_sigma0_sq(const SampleSet& data, const std::vector<RankOnePC>& fitted) {
  return estimate_sigma0_sq(CovarianceView(data), fitted);
}

/// sigma_k^2 = <Sigma_hat, U_k (x) U_k> - sigma0^2, clipped at zero.
inline SpikeVarianceEstimate estimate_sigma_sq(const CovarianceView& view, const RankOnePC& fitted_k,
                                               double sigma0_sq_hat) {
  const double raw = rayleigh(view.without_projectors(), fitted_k) - sigma0_sq_hat;
  if (raw > 0.0) return {raw, false};
  return {0.0, true};
}

inline SpikeVarianceEstimate estimate_sigma_sq(const SampleSet& data, const RankOnePC& fitted_k,
                                               double sigma0_sq_hat) {
  return estimate_sigma_sq(CovarianceView(data), fitted_k, sigma0_sq_hat);
}

inline VarianceEstimates estimate_variances(const CovarianceView& view,
                                            const std::vector<RankOnePC>& fitted) {
  VarianceEstimates out;
  out.sigma0_sq_hat = estimate_sigma0_sq(view, fitted);
  for (const auto& pc : fitted) {
    auto s = estimate_sigma_sq(view, pc, out.sigma0_sq_hat);
    out.sigma_sq_hat.push_back(s.value);
    out.clipped.push_back(s.clipped);
  }
  return out;
}

}  // namespace mpca
