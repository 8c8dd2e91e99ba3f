#pragma once

#include <stdexcept>
#include <string>

namespace kflock {

/// Raised when a run configuration cannot be parsed or fails validation.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a runtime stability contract is broken (negative cell average,
/// i.e. a CFL violation upstream of the limiter).
struct StabilityError : std::runtime_error {
  explicit StabilityError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace kflock
