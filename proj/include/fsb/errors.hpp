#pragma once

#include <stdexcept>
#include <string>

namespace fsb {

/// Inputs violate a modelling assumption (arbitrage, convex order, dispersion).
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Option prices admit a static arbitrage (negative butterfly, bad bounds).
class ArbitrageError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// The density difference f_mu - f_nu does not change sign exactly twice.
class DispersionViolation : public DomainError {
 public:
  using DomainError::DomainError;
};

/// A numerical routine failed to reach its tolerance.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class QuadratureError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace fsb
