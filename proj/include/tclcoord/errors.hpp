#pragma once

#include <stdexcept>
#include <string>

namespace tclcoord {

/// Base class for every error raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// A caller-supplied parameter is outside its admissible range.
class InvalidParameter : public Error
{
public:
  using Error::Error;
};

/// Drift signs required by the upwind discretization do not hold on the grid.
class AssumptionViolation : public Error
{
public:
  using Error::Error;
};

/// Time step exceeds the bound that keeps I + dt*A stochastic.
class CflViolation : public Error
{
public:
  CflViolation(const std::string & what, int row, double diagonal, double bound)
      : Error(what), row_(row), diagonal_(diagonal), bound_(bound)
  {}

  int row() const noexcept { return row_; }
  double diagonal() const noexcept { return diagonal_; }
  /// Largest admissible time step in hours.
  double bound() const noexcept { return bound_; }

private:
  int row_;
  double diagonal_;
  double bound_;
};

/// Phi*G does not reproduce P.
class FactorizationMismatch : public Error
{
public:
  FactorizationMismatch(const std::string & what, double max_deviation)
      : Error(what), max_deviation_(max_deviation)
  {}
  double max_deviation() const noexcept { return max_deviation_; }

private:
  double max_deviation_;
};

/// A policy puts probability where the structural zeros/ones forbid it.
class StructureViolation : public Error
{
public:
  using Error::Error;
};

/// Joint/marginal pair does not satisfy the per-step program constraints.
class ConstraintResidual : public Error
{
public:
  ConstraintResidual(const std::string & what, double residual)
      : Error(what), residual_(residual)
  {}
  double residual() const noexcept { return residual_; }

private:
  double residual_;
};

/// Dimensions of two objects do not agree.
class DimensionMismatch : public Error
{
public:
  using Error::Error;
};

/// Malformed configuration or input file.
class ConfigError : public Error
{
public:
  using Error::Error;
};

}  // namespace tclcoord
