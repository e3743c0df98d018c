#pragma once

#include <stdexcept>
#include <string>

#include "bpjd/types.hpp"

namespace bpjd {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-facing configuration (domain, mesh resolution, overlap, s, ...).
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation does not hold.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be positive definite is not (Cholesky pivot <= 0).
class DefinitenessError : public Error {
 public:
  using Error::Error;
};

/// Meshes that were expected to be nested are not.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Not enough independent directions remain to extract the requested pairs.
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

/// Conjugate gradients met a direction with non-positive curvature.
class IndefiniteOperatorError : public Error {
 public:
  IndefiniteOperatorError(double curvature, Index iteration)
      : Error("operator is not positive definite: curvature " + std::to_string(curvature) +
              " at CG iteration " + std::to_string(iteration)),
        curvature_(curvature),
        iteration_(iteration) {}

  double curvature() const noexcept { return curvature_; }
  Index iteration() const noexcept { return iteration_; }

 private:
  double curvature_;
  Index iteration_;
};

/// A shifted operator (coarse or local) is not positive definite for the requested shift.
class ShiftSafetyError : public Error {
 public:
  static constexpr Index kCoarse = -1;

  ShiftSafetyError(std::string component, Index subdomain, double shift, const std::string& detail)
      : Error("shift-safety violation in " + component +
              (subdomain >= 0 ? " (subdomain " + std::to_string(subdomain) + ")" : std::string()) +
              " for shift " + std::to_string(shift) + ": " + detail),
        component_(std::move(component)),
        subdomain_(subdomain),
        shift_(shift) {}

  const std::string& component() const noexcept { return component_; }
  Index subdomain() const noexcept { return subdomain_; }
  double shift() const noexcept { return shift_; }

 private:
  std::string component_;
  Index subdomain_;
  double shift_;
};

}  // namespace bpjd
