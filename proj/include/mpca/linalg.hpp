#pragma once

#include <cmath>

#include "mpca/tensor.hpp"

namespace mpca {

struct EigenPair {
  Vector vector;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct PowerIterationOptions {
  double tol = 1e-12;
  int max_iters = 10000;
};

/// Leading eigenvector of a symmetric positive semidefinite matrix by power
/// iteration, started from `start` when it is not (numerically) in the null
/// space of m, and otherwise from m's column with the largest diagonal entry.
/// Stops when successive unit iterates differ by at most opts.tol.
inline EigenPair leading_eigenvector(const Matrix& m, const Vector* start = nullptr,
                                     const PowerIterationOptions& opts = {}) {
  detail::require(m.rows() == m.cols() && m.rows() >= 1,
                  "leading_eigenvector: matrix must be square and nonempty");
  const double scale = m.diagonal().cwiseAbs().maxCoeff();
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw NumericalFailure("leading_eigenvector: matrix is numerically zero");

  EigenPair out;
  Vector v;
  if (start && start->size() == m.rows()) {
    Vector mv = m * (*start);
    if (mv.norm() > 1e-14 * scale * start->norm()) v = *start / start->norm();
  }
  if (v.size() == 0) {
    Eigen::Index j;
    m.diagonal().maxCoeff(&j);
    v = m.col(j) / m.col(j).norm();
  }

  for (int it = 1; it <= opts.max_iters; ++it) {
    Vector w = m * v;
    const double nrm = w.norm();
    if (!(nrm > 0.0)) throw NumericalFailure("leading_eigenvector: iterate collapsed to zero");
    w /= nrm;
    const double change = (w - v).norm();
    v = std::move(w);
    out.iterations = it;
    if (change <= opts.tol) {
      out.converged = true;
      break;
    }
  }
  out.value = v.dot(m * v);
  out.vector = std::move(v);
  return out;
}

/// Orthogonal projector onto the orthocomplement of span(basis columns).
/// The columns need not be orthonormal; they are orthonormalized first.
inline Matrix complement_projector(Eigen::Index dim, const Matrix& basis) {
  Matrix p = Matrix::Identity(dim, dim);
  if (basis.cols() == 0) return p;
  detail::require(basis.rows() == dim, "complement_projector: basis dimension mismatch");
  Matrix q = basis;
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index i = 0; i < j; ++i) q.col(j) -= q.col(i).dot(q.col(j)) * q.col(i);
    const double nrm = q.col(j).norm();
    if (!(nrm > 1e-12)) throw NumericalFailure("complement_projector: dependent basis");
    q.col(j) /= nrm;
  }
  p.noalias() -= q * q.transpose();
  return p;
}

}  // namespace mpca
