#pragma once

#include <stdexcept>
#include <string>

namespace shellkin {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument violates a documented precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Chart tangent vectors are (nearly) linearly dependent.
class SingularParametrization : public Error {
 public:
  using Error::Error;
};

/// Deformation gradient is singular or reverses orientation.
class OrientationReversal : public Error {
 public:
  using Error::Error;
};

/// Rotor or bivector field cannot be continued unambiguously.
class BranchAmbiguity : public Error {
 public:
  using Error::Error;
};

/// A modelling assumption required by an estimator does not hold.
class AssumptionViolated : public Error {
 public:
  using Error::Error;
};

/// Least-squares design matrix is rank deficient or badly conditioned.
class RankDeficient : public Error {
 public:
  using Error::Error;
};

/// Input geometry is degenerate (collinear seeds, co-located cameras, ...).
class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

}  // namespace shellkin
