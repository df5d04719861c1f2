#pragma once

#include <stdexcept>
#include <string>

namespace quadvar {

/// An iterative method stopped without meeting its tolerance, or converged to
/// an inadmissible point.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double last_residual, long iterations)
      : std::runtime_error(what), last_residual_(last_residual), iterations_(iterations) {}

  double last_residual() const noexcept { return last_residual_; }
  long iterations() const noexcept { return iterations_; }

 private:
  double last_residual_;
  long iterations_;
};

}  // namespace quadvar
