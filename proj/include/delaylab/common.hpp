#pragma once

// Shared error type and precondition helpers.
//
// Library operations validate their documented preconditions at API
// boundaries and throw ContractViolation (a logic error: the caller broke the
// contract) rather than returning garbage. Numerical failures that are not
// the caller's fault (e.g. an iterative solve not reaching tolerance) throw
// NumericalError instead.

#include <stdexcept>
#include <string>

namespace delaylab {

class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace delaylab
