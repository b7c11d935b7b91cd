#pragma once

#include <stdexcept>
#include <string>

namespace mpca {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed arguments: dimension mismatches, out-of-range parameters,
/// inconsistent configuration.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure could not produce a meaningful answer
/// (e.g. no direction of positive variance).
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

/// Inference for a particular coordinate cannot be carried out at this
/// sample size (clipped spike variance, negative quarter overlap, ...).
class InferenceUnavailable : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidInput(what);
}

}  // namespace detail
}  // namespace mpca
