#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>

#include "pairfield/core/errors.hpp"

namespace pairfield {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Constraint constants of the feasible parameter sets: entrywise bound alpha,
/// row l1 bound beta on the interaction matrix, and support half-width x_max
/// (observations live in [-x_max, x_max]).
struct Bounds {
  double alpha = 1.0;
  double beta = 1.0;
  double x_max = 1.0;

  void check() const {
    if (!(alpha > 0.0) || !(beta > 0.0) || !(x_max > 0.0))
      throw InvalidArgument("Bounds: alpha, beta, x_max must all be positive");
  }
};

/// Block sizes of an observation row (covariates, interventions, outcomes)
/// plus the unit count. Columns are laid out [v | a | y] in that order.
struct Dims {
  int p_v = 0;
  int p_a = 0;
  int p_y = 0;
  int n = 1;

  int p() const { return p_v + p_a + p_y; }
  int a_offset() const { return p_v; }
  int y_offset() const { return p_v + p_a; }

  void check() const {
    if (p_v < 0 || p_a < 0 || p_y < 0)
      throw InvalidArgument("Dims: block sizes must be nonnegative");
    if (p() < 1) throw InvalidArgument("Dims: p must be at least 1");
    if (n < 1) throw InvalidArgument("Dims: n must be at least 1");
  }
};

/// Shared symmetric interaction matrix. Construction symmetrizes inputs whose
/// asymmetry is within rounding tolerance (file round-trips) and rejects
/// anything larger.
class PopulationMatrix {
 public:
  PopulationMatrix() = default;

  explicit PopulationMatrix(MatrixXd m, double asym_tol = 1e-9) {
    if (m.rows() != m.cols())
      throw InvalidArgument("PopulationMatrix: matrix must be square");
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (asym > asym_tol)
      throw InvalidArgument("PopulationMatrix: asymmetry " + std::to_string(asym) +
                            " exceeds tolerance");
    if (asym > 0.0) m = 0.5 * (m + m.transpose()).eval();
    mat_ = std::move(m);
  }

  static PopulationMatrix zero(int p) { return PopulationMatrix(MatrixXd::Zero(p, p)); }

  const MatrixXd& mat() const { return mat_; }
  int p() const { return static_cast<int>(mat_.rows()); }

 private:
  MatrixXd mat_;
};

/// Per-unit external field vectors, one row per unit.
struct UnitFields {
  MatrixXd rows;

  int n() const { return static_cast<int>(rows.rows()); }
  int p() const { return static_cast<int>(rows.cols()); }
};

/// The joint optimization variable: shared interaction matrix plus the n
/// per-unit fields.
struct ExtendedParams {
  PopulationMatrix population;
  UnitFields units;

  ExtendedParams() = default;
  ExtendedParams(PopulationMatrix pop, MatrixXd unit_rows)
      : population(std::move(pop)), units{std::move(unit_rows)} {
    if (units.p() != population.p())
      throw InvalidArgument("ExtendedParams: unit fields must be n x p");
  }

  static ExtendedParams zero(int n, int p) {
    return ExtendedParams(PopulationMatrix::zero(p), MatrixXd::Zero(n, p));
  }

  int n() const { return units.n(); }
  int p() const { return population.p(); }
};

/// Observation matrix with its block layout and the bounds it was generated
/// under. support_halfwidth is the validation range for entries; it defaults
/// to bounds.x_max and is widened for observed data carrying additive
/// measurement error (the model x_max still drives the loss centering).
struct Dataset {
  MatrixXd X;
  Dims dims;
  Bounds bounds;
  double support_halfwidth = 0.0;

  static Dataset make(MatrixXd X, Dims dims, Bounds bounds, double support_halfwidth = -1.0) {
    bounds.check();
    dims.check();
    if (support_halfwidth <= 0.0) support_halfwidth = bounds.x_max;
    if (X.rows() != dims.n || X.cols() != dims.p())
      throw InvalidArgument("Dataset: matrix must be n x p");
    for (int i = 0; i < X.rows(); ++i)
      for (int t = 0; t < X.cols(); ++t) {
        const double v = X(i, t);
        if (!std::isfinite(v) || std::abs(v) > support_halfwidth * (1.0 + 1e-12))
          throw InvalidArgument("Dataset: entry (" + std::to_string(i) + "," +
                                std::to_string(t) + ") outside support");
      }
    return Dataset{std::move(X), dims, bounds, support_halfwidth};
  }

  int n() const { return dims.n; }
  int p() const { return dims.p(); }
};

/// Generator-side truth: field vector phi and symmetric interaction Phi.
struct JointParams {
  VectorXd phi;
  MatrixXd Phi;

  int p() const { return static_cast<int>(phi.size()); }

  void check_shapes() const {
    if (Phi.rows() != Phi.cols() || Phi.rows() != phi.size())
      throw InvalidArgument("JointParams: Phi must be p x p matching phi");
    const double asym = (Phi - Phi.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-9) throw InvalidArgument("JointParams: Phi must be symmetric");
  }
};

}  // namespace pairfield
