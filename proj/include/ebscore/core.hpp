#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <string_view>

namespace ebscore {

inline constexpr std::string_view kVersion = "ebscore 0.1.0";

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
/// Point sets are stored one point per row (n x d).
using Matrix = Eigen::MatrixXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or configuration value. CLI exit code 2.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A numeric evaluation produced a non-finite value.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

class UnsupportedOperation : public Error {
 public:
  using Error::Error;
};

/// A target family could not be built (e.g. negative density).
class ConstructionError : public Error {
 public:
  using Error::Error;
};

/// Quadrature grid does not hold enough of the probability mass.
class CoverageError : public Error {
 public:
  using Error::Error;
};

/// File could not be read, parsed or written. CLI exit code 3.
class IoError : public Error {
 public:
  using Error::Error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ParameterError(message);
}

}  // namespace ebscore
