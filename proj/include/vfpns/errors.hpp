#pragma once

#include <stdexcept>
#include <string>

namespace vfpns {

// Bad user input: malformed config, invalid grid parameters, contract violations.
// CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Solver blow-up: NaN/Inf fields, positivity loss beyond budget, CFL violation.
// CLI maps this to exit code 3.
struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace vfpns
