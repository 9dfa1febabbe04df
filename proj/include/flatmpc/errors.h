#pragma once

#include <stdexcept>
#include <string>

namespace flatmpc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The Hamiltonian has eigenvalues on the imaginary axis or the stable
/// subspace cannot be mapped to a symmetric positive definite P. Usually
/// means gamma is too small.
class NoStabilizingSolution : public Error {
 public:
  using Error::Error;
};

class AllGammaInfeasible : public Error {
 public:
  using Error::Error;
};

/// Tightening a region by the error ellipsoid left nothing behind.
class EmptyTightenedRegion : public Error {
 public:
  using Error::Error;
};

/// Flat velocity below the speed floor where the inverse flat map is
/// undefined.
class SingularState : public Error {
 public:
  using Error::Error;
};

/// The very first planning problem had no feasible region assignment.
class InitialInfeasible : public Error {
 public:
  using Error::Error;
};

class ScenarioError : public Error {
 public:
  using Error::Error;
};

}  // namespace flatmpc
