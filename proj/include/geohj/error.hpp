#pragma once

#include <stdexcept>
#include <string>

namespace geohj {

/// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed descriptor, manifest or tolerance record.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Cotangent and tangent atoms were paired across different base points.
class BaseMismatch : public Error {
 public:
  using Error::Error;
};

/// A discrete path has two consecutive nodes farther apart than the
/// injectivity radius, so the discrete velocity is not well defined.
class StepTooLarge : public Error {
 public:
  using Error::Error;
};

/// Iterative solver stopped before reaching its tolerance.
class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& what, int iterations, double residual)
      : Error(what + " (iterations=" + std::to_string(iterations) +
              ", residual=" + std::to_string(residual) + ")"),
        iterations_(iterations),
        residual_(residual) {}

  int iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  int iterations_;
  double residual_;
};

/// Newton shooting on the initial velocity failed after all restarts.
class ShootingFailed : public Error {
 public:
  ShootingFailed(const std::string& what, std::size_t row, std::size_t col)
      : Error(what), row_(row), col_(col) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }

 private:
  std::size_t row_;
  std::size_t col_;
};

/// The exact transport solver left the feasible set. Valid inputs never
/// trigger this; it signals an internal error.
class SolverInfeasible : public Error {
 public:
  using Error::Error;
};

}  // namespace geohj
