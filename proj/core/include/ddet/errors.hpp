#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ddet {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the physical domain (non-positive temperature, dt <= 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Array dimensions inconsistent with mesh / quadrature / group layout.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Unsupported or invalid configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Zero or negative denominator in a ratio-defined quantity.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or otherwise unusable input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed container file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Linear or nonlinear solve failure. Carries the residual history when one exists.
class SolverError : public Error {
 public:
  explicit SolverError(const std::string& what, std::vector<double> history = {})
      : Error(what), history_(std::move(history)) {}

  const std::vector<double>& history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

}  // namespace ddet
