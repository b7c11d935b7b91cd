#pragma once

// Dense order-p tensors and the multilinear primitives used throughout.
//
// Storage is row-major over (i_1, ..., i_p): the last index varies fastest.
// Indices are 0-based in code.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mpca/error.hpp"

namespace mpca {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Dims = std::vector<std::size_t>;

inline std::size_t dims_product(std::span<const std::size_t> dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string dims_to_string(std::span<const std::size_t> dims) {
  std::string s = "(";
  for (std::size_t q = 0; q < dims.size(); ++q) {
    if (q) s += ",";
    s += std::to_string(dims[q]);
  }
  return s + ")";
}

class Tensor {
 public:
  Tensor() = default;

  /// Zero tensor of the given shape.
  explicit Tensor(Dims dims) : dims_(std::move(dims)) {
    validate_dims();
    data_.assign(dims_product(dims_), 0.0);
  }

  Tensor(Dims dims, std::vector<double> data)
      : dims_(std::move(dims)), data_(std::move(data)) {
    validate_dims();
    detail::require(data_.size() == dims_product(dims_),
                    "tensor data length " + std::to_string(data_.size()) +
                        " does not match dims " + dims_to_string(dims_));
  }

  std::size_t order() const { return dims_.size(); }
  const Dims& dims() const { return dims_; }
  std::size_t dim(std::size_t q) const { return dims_.at(q); }
  std::size_t size() const { return data_.size(); }
  std::span<const double> data() const { return data_; }

  /// Row-major linear offset of a multi-index.
  std::size_t offset(std::span<const std::size_t> idx) const {
    detail::require(idx.size() == dims_.size(), "index arity mismatch");
    std::size_t off = 0;
    for (std::size_t q = 0; q < dims_.size(); ++q) {
      detail::require(idx[q] < dims_[q], "index out of range");
      off = off * dims_[q] + idx[q];
    }
    return off;
  }

  double operator()(std::initializer_list<std::size_t> idx) const {
    return data_[offset(std::span<const std::size_t>(idx.begin(), idx.size()))];
  }
  double at(std::span<const std::size_t> idx) const { return data_[offset(idx)]; }

  Eigen::Map<const Vector> as_vector() const {
    return {data_.data(), static_cast<Eigen::Index>(data_.size())};
  }

 private:
  void validate_dims() const {
    detail::require(!dims_.empty(), "tensor order must be at least 1");
    for (auto d : dims_) detail::require(d >= 1, "tensor dimensions must be positive");
  }

  Dims dims_;
  std::vector<double> data_;
};

/// A vector of Euclidean norm one (within 1e-12).
class UnitVector {
 public:
  static constexpr double kTolerance = 1e-12;

  UnitVector() = default;

  /// Checked construction; the input must already have unit norm.
  explicit UnitVector(Vector coords) : coords_(std::move(coords)) {
    detail::require(coords_.size() >= 1, "unit vector must have positive dimension");
    detail::require(std::abs(coords_.norm() - 1.0) <= kTolerance,
                    "vector is not unit length");
  }

  /// Rescales a nonzero vector to unit length.
  static UnitVector normalized(const Vector& v) {
    const double nrm = v.norm();
    if (!(nrm > 0.0) || !std::isfinite(nrm))
      throw InvalidInput("cannot normalize a zero or non-finite vector");
    UnitVector u;
    u.coords_ = v / nrm;
    return u;
  }

  static UnitVector basis(std::size_t dim, std::size_t i) {
    detail::require(i < dim, "basis index out of range");
    Vector v = Vector::Zero(static_cast<Eigen::Index>(dim));
    v(static_cast<Eigen::Index>(i)) = 1.0;
    return UnitVector(std::move(v));
  }

  std::size_t dim() const { return static_cast<std::size_t>(coords_.size()); }
  const Vector& coords() const { return coords_; }
  double operator[](std::size_t i) const { return coords_(static_cast<Eigen::Index>(i)); }
  UnitVector operator-() const {
    UnitVector u;
    u.coords_ = -coords_;
    return u;
  }

 private:
  Vector coords_;
};

/// A rank-one tensor u^(1) x ... x u^(p) with unit factors, plus an
/// associated variance value.
struct RankOnePC {
  std::vector<UnitVector> factors;
  double value = 0.0;

  std::size_t order() const { return factors.size(); }
  Dims dims() const {
    Dims d;
    for (const auto& f : factors) d.push_back(f.dim());
    return d;
  }
  Tensor to_tensor() const;
};

// ---------------------------------------------------------------------------

namespace detail {

/// Kronecker product v_first (x) ... (x) v_last in row-major order, i.e. the
/// vectorization of the outer product.
inline Vector kron(std::span<const Vector> vs) {
  Vector out = Vector::Ones(1);
  for (const auto& v : vs) {
    Vector next(out.size() * v.size());
    for (Eigen::Index a = 0; a < out.size(); ++a)
      next.segment(a * v.size(), v.size()) = out(a) * v;
    out = std::move(next);
  }
  return out;
}

}  // namespace detail

inline Tensor outer_product(std::span<const UnitVector> vectors) {
  detail::require(!vectors.empty(), "outer product of an empty list");
  std::vector<Vector> vs;
  Dims dims;
  for (const auto& u : vectors) {
    vs.push_back(u.coords());
    dims.push_back(u.dim());
  }
  Vector k = detail::kron(vs);
  return Tensor(std::move(dims), std::vector<double>(k.data(), k.data() + k.size()));
}

inline Tensor RankOnePC::to_tensor() const { return outer_product(factors); }

/// Mode-q product with a matrix m (J x d_q):
///   [T x_q m]_{..j..} = sum_i T_{..i..} m(j, i).
inline Tensor mode_product(const Tensor& t, std::size_t q, const Matrix& m) {
  detail::require(q < t.order(), "mode index out of range");
  const std::size_t dq = t.dim(q);
  detail::require(static_cast<std::size_t>(m.cols()) == dq,
                  "mode_product: matrix columns do not match mode dimension");
  const auto& dims = t.dims();
  const std::size_t pre = dims_product(std::span(dims).first(q));
  const std::size_t post = dims_product(std::span(dims).subspan(q + 1));
  const std::size_t rows = static_cast<std::size_t>(m.rows());

  Dims out_dims = dims;
  out_dims[q] = rows;
  std::vector<double> out(pre * rows * post, 0.0);
  auto src = t.data();
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  for (std::size_t a = 0; a < pre; ++a) {
    Eigen::Map<const RowMat> block(src.data() + a * dq * post,
                                   static_cast<Eigen::Index>(dq),
                                   static_cast<Eigen::Index>(post));
    Eigen::Map<RowMat> dst(out.data() + a * rows * post, static_cast<Eigen::Index>(rows),
                           static_cast<Eigen::Index>(post));
    dst.noalias() = m * block;
  }
  return Tensor(std::move(out_dims), std::move(out));
}

/// Mode-q contraction with a vector; the result has one mode fewer. Contracting
/// an order-1 tensor yields a one-element tensor of dims (1).
inline Tensor mode_product(const Tensor& t, std::size_t q, const Vector& v) {
  detail::require(q < t.order(), "mode index out of range");
  detail::require(static_cast<std::size_t>(v.size()) == t.dim(q),
                  "mode_product: vector length does not match mode dimension");
  Tensor full = mode_product(t, q, Matrix(v.transpose()));
  Dims dims = t.dims();
  dims.erase(dims.begin() + static_cast<std::ptrdiff_t>(q));
  if (dims.empty()) dims.push_back(1);
  auto d = full.data();
  return Tensor(std::move(dims), std::vector<double>(d.begin(), d.end()));
}

inline double inner(const Tensor& a, const Tensor& b) {
  detail::require(a.dims() == b.dims(), "inner: dimension mismatch " +
                                            dims_to_string(a.dims()) + " vs " +
                                            dims_to_string(b.dims()));
  return a.as_vector().dot(b.as_vector());
}

inline double frobenius_norm(const Tensor& t) { return t.as_vector().norm(); }

namespace detail {

// sin t = |a - b| |a + b| / 2 for unit a, b: symmetric, and accurate near
// zero where sqrt(1 - cos^2) bottoms out at 1.5e-8.
inline double sin_angle_vec(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  const double na = a.norm(), nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw InvalidInput("sin_angle of a zero vector");
  const Vector au = a / na;
  const Vector bu = b / nb;
  return std::min(1.0, 0.5 * (au - bu).norm() * (au + bu).norm());
}

}  // namespace detail

/// sin of the angle in [0, pi/2] between two vectors; sign-invariant.
inline double sin_angle(const Vector& a, const Vector& b) {
  detail::require(a.size() == b.size(), "sin_angle: dimension mismatch");
  return detail::sin_angle_vec(a, b);
}

inline double sin_angle(const UnitVector& a, const UnitVector& b) {
  return sin_angle(a.coords(), b.coords());
}

inline double sin_angle(const Tensor& a, const Tensor& b) {
  detail::require(a.dims() == b.dims(), "sin_angle: dimension mismatch");
  return detail::sin_angle_vec(a.as_vector(), b.as_vector());
}

/// Tensor-level sin angle between two rank-one tensors, computed from the
/// per-mode inner products without materializing either tensor.
inline double sin_angle(const RankOnePC& a, const RankOnePC& b) {
  detail::require(a.order() == b.order(), "sin_angle: order mismatch");
  // 1 - prod cos_q^2 via log1p/expm1 so small per-mode angles survive.
  double log_c2 = 0.0;
  for (std::size_t q = 0; q < a.order(); ++q) {
    detail::require(a.factors[q].dim() == b.factors[q].dim(), "sin_angle: dimension mismatch");
    const double s = detail::sin_angle_vec(a.factors[q].coords(), b.factors[q].coords());
    log_c2 += std::log1p(-s * s);
  }
  return std::sqrt(std::max(0.0, -std::expm1(log_c2)));
}

}  // namespace mpca
