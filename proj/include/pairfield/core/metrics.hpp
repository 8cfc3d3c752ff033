#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pairfield/core/errors.hpp"
#include "pairfield/core/types.hpp"

namespace pairfield {

/// Means of x and x^2 under the uniform distribution on [-x_max, x_max]:
/// (0, x_max^2 / 3). These center the sufficient statistics of each
/// per-coordinate conditional.
inline std::pair<double, double> centering_constants(double x_max) {
  if (!(x_max > 0.0)) throw InvalidArgument("centering_constants: x_max must be positive");
  return {0.0, x_max * x_max / 3.0};
}

/// Mean squared error p^-1 sum_t (u_t - v_t)^2.
inline double mse(const VectorXd& u_hat, const VectorXd& u_tilde) {
  if (u_hat.size() != u_tilde.size())
    throw InvalidArgument("mse: length mismatch");
  if (u_hat.size() == 0) throw InvalidArgument("mse: empty vectors");
  return (u_hat - u_tilde).squaredNorm() / static_cast<double>(u_hat.size());
}

/// (2,inf)-norm: the maximum row l2 norm.
inline double norm_2inf(const MatrixXd& m) {
  if (m.rows() == 0 || m.cols() == 0) throw InvalidArgument("norm_2inf: empty matrix");
  return m.rowwise().norm().maxCoeff();
}

struct Violation {
  enum class Kind { Asymmetry, PopulationEntry, RowL1, UnitFieldEntry };
  Kind kind;
  int row = -1;
  int col = -1;
  double magnitude = 0.0;

  std::string describe() const {
    std::ostringstream os;
    switch (kind) {
      case Kind::Asymmetry:
        os << "asymmetry at (" << row << "," << col << ")";
        break;
      case Kind::PopulationEntry:
        os << "population entry bound at (" << row << "," << col << ")";
        break;
      case Kind::RowL1:
        os << "row l1 bound at row " << row;
        break;
      case Kind::UnitFieldEntry:
        os << "unit field entry bound at (" << row << "," << col << ")";
        break;
    }
    os << ", excess " << magnitude;
    return os.str();
  }
};

struct FeasibilityReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

/// Lists every violated constraint with location and magnitude of excess.
/// Empty report iff the parameters are feasible for the given bounds. A small
/// slack absorbs roundoff from projections and file round-trips.
inline FeasibilityReport validate(const ExtendedParams& params, const Bounds& bounds,
                                  double slack = 1e-9) {
  bounds.check();
  FeasibilityReport report;
  const MatrixXd& theta = params.population.mat();
  const int p = params.p();
  for (int t = 0; t < p; ++t) {
    for (int u = t; u < p; ++u) {
      const double asym = std::abs(theta(t, u) - theta(u, t));
      if (asym > slack)
        report.violations.push_back({Violation::Kind::Asymmetry, t, u, asym});
      const double excess = std::abs(theta(t, u)) - bounds.alpha;
      if (excess > slack)
        report.violations.push_back({Violation::Kind::PopulationEntry, t, u, excess});
    }
    const double row_excess = theta.row(t).lpNorm<1>() - bounds.beta;
    if (row_excess > slack)
      report.violations.push_back({Violation::Kind::RowL1, t, -1, row_excess});
  }
  const MatrixXd& fields = params.units.rows;
  for (int i = 0; i < fields.rows(); ++i)
    for (int t = 0; t < p; ++t) {
      const double excess = std::abs(fields(i, t)) - bounds.alpha;
      if (excess > slack)
        report.violations.push_back({Violation::Kind::UnitFieldEntry, i, t, excess});
    }
  return report;
}

}  // namespace pairfield
