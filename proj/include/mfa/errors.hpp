#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mfa {

/// An iterative solver ran out of iterations before meeting its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::size_t iterations, double residual)
      : std::runtime_error(what + " (after " + std::to_string(iterations) +
                           " iterations, residual " + std::to_string(residual) + ")"),
        iterations_(iterations),
        residual_(residual) {}

  std::size_t iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  std::size_t iterations_;
  double residual_;
};

}  // namespace mfa
