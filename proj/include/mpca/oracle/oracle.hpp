#pragma once

// Brute-force references for small instances. Nothing in the estimation
// path includes this header; the tests and `mpca oracle-check` do.

#include <cmath>
#include <numeric>
#include <vector>

#include "mpca/covariance.hpp"
#include "mpca/spiked_model.hpp"

namespace mpca::oracle {

inline constexpr std::size_t kMaxDenseDim = 4096;

/// (1/n) sum_i vec(X_i) vec(X_i)^T.
struct DenseCovariance {
  Matrix c;

  explicit DenseCovariance(const SampleSet& data) {
    const auto dd = static_cast<Eigen::Index>(data.obs_size());
    detail::require(data.obs_size() <= kMaxDenseDim, "DenseCovariance: dimension over the oracle guard");
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
        data.stacked().data(), static_cast<Eigen::Index>(data.n()), dd);
    c = x.transpose() * x / static_cast<double>(data.n());
    c = 0.5 * (c + c.transpose()).eval();
  }
  explicit DenseCovariance(Matrix m) : c(std::move(m)) {
    detail::require(c.rows() == c.cols(), "DenseCovariance: matrix must be square");
    detail::require((c - c.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, c.cwiseAbs().maxCoeff()),
                    "DenseCovariance: matrix must be symmetric");
  }

  Eigen::Index dim() const { return c.rows(); }
};

struct DenseEigen {
  Vector values;   // descending
  Matrix vectors;  // columns, matching values
};

/// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
inline DenseEigen dense_eig(const Matrix& input) {
  detail::require(input.rows() == input.cols() && input.rows() >= 1, "dense_eig: matrix must be square");
  detail::require(static_cast<std::size_t>(input.rows()) <= kMaxDenseDim,
                  "dense_eig: dimension over the oracle guard");
  const Eigen::Index n = input.rows();
  Matrix a = 0.5 * (input + input.transpose());
  Matrix v = Matrix::Identity(n, n);
  const double total = a.squaredNorm();
  for (int sweep = 0; sweep < 100; ++sweep) {
    const double off = a.squaredNorm() - a.diagonal().squaredNorm();
    if (off <= 1e-30 * std::max(total, 1e-300)) break;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });
  DenseEigen out{Vector(n), Matrix(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values(i) = a(order[i], order[i]);
    out.vectors.col(i) = v.col(order[i]);
  }
  return out;
}

inline DenseEigen dense_eig(const DenseCovariance& c) { return dense_eig(c.c); }

struct GridOptimum {
  double theta1 = 0.0;
  double theta2 = 0.0;
  double objective = 0.0;
};

/// Sample variance of w1 (x) w2 for d = (2, 2) data, scanning both angles
/// over {0, step, 2 step, ...} within [0, pi).
inline GridOptimum grid_best_rank_one(const SampleSet& data, double step) {
  detail::require(data.dims() == Dims{2, 2}, "grid_best_rank_one: data must have dims (2, 2)");
  detail::require(step > 0.0 && step < M_PI, "grid_best_rank_one: step must lie in (0, pi)");
  // The objective is a quadratic form in vec(w1 w2^T); precompute it.
  const DenseCovariance cov(data);
  const auto m = static_cast<std::size_t>(std::ceil(M_PI / step));
  std::vector<double> cs(m), sn(m);
  for (std::size_t i = 0; i < m; ++i) {
    cs[i] = std::cos(static_cast<double>(i) * step);
    sn[i] = std::sin(static_cast<double>(i) * step);
  }
  GridOptimum best{0.0, 0.0, -1.0};
  Eigen::Vector4d w;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      w << cs[i] * cs[j], cs[i] * sn[j], sn[i] * cs[j], sn[i] * sn[j];
      const double obj = w.dot(cov.c * w);
      if (obj > best.objective)
        best = {static_cast<double>(i) * step, static_cast<double>(j) * step, obj};
    }
  }
  return best;
}

/// Residual ||M w - (w^T M w) w|| of a unit vector.
inline double eigen_residual(const Matrix& m, const Vector& w) {
  const Vector mw = m * w;
  return (mw - w.dot(mw) * w).norm();
}

}  // namespace mpca::oracle
