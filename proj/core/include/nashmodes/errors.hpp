#pragma once

#include <stdexcept>
#include <string>

namespace nashmodes {

/// Invalid or inconsistent configuration (dimensions, matrices, identifiers).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or failed factorizations during evaluation.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what, int step = -1)
      : std::runtime_error(step >= 0 ? what + " (step " + std::to_string(step) + ")" : what),
        step_(step) {}

  /// Time step at which the failure occurred, or -1 when not step-specific.
  int step() const noexcept { return step_; }

 private:
  int step_;
};

}  // namespace nashmodes
