#pragma once

#include <stdexcept>
#include <string>

namespace pairfield {

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct UnsupportedDimension : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Thrown when an exponent clamp would bind or a result is non-finite.
/// Carries the first offending (unit, coordinate) pair when known.
struct NumericOverflow : std::runtime_error {
  int unit = -1;
  int coord = -1;
  NumericOverflow(const std::string& msg, int unit_ = -1, int coord_ = -1)
      : std::runtime_error(msg), unit(unit_), coord(coord_) {}
};

struct NumericUnderflow : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when random truth generation exhausts its retry budget.
struct GenerationFailure : std::runtime_error {
  double best_kappa = 0.0;
  GenerationFailure(const std::string& msg, double best)
      : std::runtime_error(msg), best_kappa(best) {}
};

}  // namespace pairfield
