#pragma once

#include <stdexcept>
#include <string>

namespace chimera {

/// An input lies outside the mathematical domain of an operation
/// (non-positive price, negative ad spend, trust out of bounds).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A configuration value or file could not be interpreted.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Too few observations to fit an estimator.
class InsufficientData : public DomainError {
 public:
  using DomainError::DomainError;
};

/// A treatment coordinate carries no variation once the state is
/// partialled out, so its effect is not identified.
class DegenerateTreatment : public DomainError {
 public:
  using DomainError::DomainError;
};

}  // namespace chimera
