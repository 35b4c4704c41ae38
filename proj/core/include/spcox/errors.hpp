#pragma once

#include <stdexcept>
#include <string>

namespace spcox {

/// Bad user input: malformed files, inconsistent ids, invalid configuration.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical breakdown: diverged fit, singular solve, infeasible program.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace spcox
