// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT
//
// Exception types shared by all modules. The CLI maps them onto exit codes.

#ifndef PATCHSTITCH_ERROR_HPP
#define PATCHSTITCH_ERROR_HPP

#include <stdexcept>
#include <string>

namespace patchstitch {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or violated precondition on caller-supplied values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed, missing or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: divergence, NaN, singular systems.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Geometric configuration too degenerate for the requested fit
/// (collinear or coincident points, singular jet system).
class DegenerateInput : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace patchstitch

#endif  // PATCHSTITCH_ERROR_HPP
