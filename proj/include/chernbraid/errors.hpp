#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace chernbraid {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or non-finite input.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Failure that can be attributed to one step of an adiabatic sweep.
class SweepStepError : public Error {
 public:
  SweepStepError(const std::string& what, std::optional<int> step)
      : Error(step ? what + " (step " + std::to_string(*step) + ")" : what),
        step_(step) {}

  std::optional<int> step() const { return step_; }

 private:
  std::optional<int> step_;
};

/// The N/N+1 single-particle gap closed; the N-fermion ground state is not unique.
class GroundStateDegenerate : public SweepStepError {
 public:
  GroundStateDegenerate(double gap, std::optional<int> step = std::nullopt)
      : SweepStepError("ground state degenerate: N/N+1 gap " + std::to_string(gap), step),
        gap_(gap) {}

  double gap() const { return gap_; }

 private:
  double gap_;
};

/// Successive occupied subspaces became (numerically) orthogonal.
class AlignmentLost : public SweepStepError {
 public:
  AlignmentLost(double min_singular_value, std::optional<int> step = std::nullopt)
      : SweepStepError("alignment lost: smallest overlap singular value " +
                           std::to_string(min_singular_value),
                       step),
        min_singular_value_(min_singular_value) {}

  double min_singular_value() const { return min_singular_value_; }

 private:
  double min_singular_value_;
};

/// The pin-free spectrum has no isolated lowest band.
class NoBandGap : public Error {
 public:
  using Error::Error;
};

}  // namespace chernbraid
