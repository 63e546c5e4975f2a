#pragma once

#include <stdexcept>
#include <string>

namespace polyseg {

/// Rejected input: violated hypothesis, malformed config, bad shape.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// An iterative solver ran out of iterations or diverged.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double last_residual)
      : std::runtime_error(what), last_residual_(last_residual) {}

  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

}  // namespace polyseg
