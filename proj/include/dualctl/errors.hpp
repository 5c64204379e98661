#pragma once

#include <stdexcept>
#include <string>

namespace dualctl {

// Invalid model, control or configuration input.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A wealth path left the admissible region (X <= 0).
class AdmissibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure inside a solver (rank loss, singular implicit step).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A constructed primal/dual object violates the hypotheses of the bridge maps.
class BridgeViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dualctl
