#pragma once

#include <cmath>
#include <string>

#include "pairfield/core/errors.hpp"
#include "pairfield/core/metrics.hpp"
#include "pairfield/core/types.hpp"
#include "pairfield/numerics/gauss_legendre.hpp"
#include "pairfield/numerics/parallel.hpp"
#include "pairfield/numerics/summation.hpp"

namespace pairfield {

/// Gradient of the pooled loss. d_population is accumulated symmetrically and
/// is exactly symmetric; shapes mirror ExtendedParams.
struct LossGradient {
  MatrixXd d_population;
  MatrixXd d_units;
};

namespace detail {

// Exponents are bounded for feasible parameters by
// x_max (alpha + 2 beta x_max) + alpha x_max^2, far below the clamp. A clamp
// that would bind means infeasible inputs or a numerical fault, so it raises
// instead of saturating.
constexpr double kExpClamp = 700.0;

/// Per-term weights w_{i,t} = exp(-[theta_t^(i) + 2 Theta_{t,-t}' x_{-t}] x_t
///                                - Theta_tt (x_t^2 - x_max^2/3)).
/// Every loss and gradient quantity is assembled from this n x p grid.
inline MatrixXd term_weights(const ExtendedParams& params, const Dataset& data) {
  if (params.n() != data.n() || params.p() != data.p())
    throw InvalidArgument("loss: parameter/data shape mismatch");
  const MatrixXd& X = data.X;
  const MatrixXd& theta = params.population.mat();
  const double c2 = centering_constants(data.bounds.x_max).second;
  const int n = data.n();
  const int p = data.p();

  // Theta_{t,-t}' x_{-t} = (X Theta)_{i,t} - Theta_tt x_{i,t}, so the exponent
  // simplifies to -(F + 2 X Theta) o X + (X o X + c2) diag(Theta).
  MatrixXd exponent = -((params.units.rows + 2.0 * (X * theta)).cwiseProduct(X));
  const VectorXd diag = theta.diagonal();
  exponent.noalias() += (X.cwiseProduct(X)) * diag.asDiagonal();
  exponent.rowwise() += (c2 * diag).transpose();

  int blocks = (n + 255) / 256;
  MatrixXd weights(n, p);
  parallel_for(blocks, [&](int b) {
    const int lo = b * 256;
    const int hi = std::min(n, lo + 256);
    weights.middleRows(lo, hi - lo) = exponent.middleRows(lo, hi - lo).array().exp();
  });

  if (!(exponent.cwiseAbs().maxCoeff() <= kExpClamp)) {
    int bi = 0, bt = 0;
    exponent.cwiseAbs().maxCoeff(&bi, &bt);
    throw NumericOverflow("loss: exponent clamp would bind at unit " + std::to_string(bi) +
                              ", coordinate " + std::to_string(bt),
                          bi, bt);
  }
  return weights;
}

}  // namespace detail

/// Pooled convex loss
///   L = (1/n) sum_t sum_i w_{i,t},
/// the empirical average over units of the sum over coordinates of the
/// inverse per-coordinate conditional density with centered sufficient
/// statistics. Partition-function free and jointly convex in (Theta, fields).
/// Strictly positive. Per-node column sums use pairwise summation so the
/// decomposition identities hold to 1e-12 relative.
inline double loss_value(const ExtendedParams& params, const Dataset& data) {
  const MatrixXd weights = detail::term_weights(params, data);
  const int p = data.p();
  VectorXd node_sums(p);
  for (int t = 0; t < p; ++t)
    node_sums[t] = pairwise_sum([&](std::size_t i) { return weights(static_cast<int>(i), t); },
                                0, static_cast<std::size_t>(data.n()));
  return pairwise_sum(node_sums) / static_cast<double>(data.n());
}

/// The t-th auxiliary objective L_t; sum over t recovers loss_value.
inline double loss_node(int t, const ExtendedParams& params, const Dataset& data) {
  if (t < 0 || t >= data.p()) throw InvalidArgument("loss_node: index out of range");
  const MatrixXd weights = detail::term_weights(params, data);
  return pairwise_sum([&](std::size_t i) { return weights(static_cast<int>(i), t); }, 0,
                      static_cast<std::size_t>(data.n())) /
         static_cast<double>(data.n());
}

/// Per-unit objective L^(i)(field) = sum_t w_t for a single observation row,
/// with the interaction matrix held fixed. (1/n) sum_i loss_unit = loss_value.
inline double loss_unit(const VectorXd& field, const PopulationMatrix& population,
                        const VectorXd& x_i, double x_max) {
  const int p = population.p();
  if (field.size() != p || x_i.size() != p)
    throw InvalidArgument("loss_unit: dimension mismatch");
  const double c2 = centering_constants(x_max).second;
  const MatrixXd& theta = population.mat();
  const VectorXd tx = theta * x_i;
  VectorXd terms(p);
  for (int t = 0; t < p; ++t) {
    const double cross = tx[t] - theta(t, t) * x_i[t];
    const double e = -(field[t] + 2.0 * cross) * x_i[t] -
                     theta(t, t) * (x_i[t] * x_i[t] - c2);
    if (!(std::abs(e) <= detail::kExpClamp))
      throw NumericOverflow("loss_unit: exponent clamp would bind", -1, t);
    terms[t] = std::exp(e);
  }
  return pairwise_sum(terms);
}

inline double loss_unit(int i, const ExtendedParams& params, const Dataset& data) {
  if (i < 0 || i >= data.n()) throw InvalidArgument("loss_unit: index out of range");
  return loss_unit(params.units.rows.row(i).transpose(), params.population,
                   data.X.row(i).transpose(), data.bounds.x_max);
}

/// Analytic gradient of loss_value. With w as in term_weights:
///   d/d theta_t^(i)    = -(1/n) x_t^(i) w_{i,t}
///   d/d Theta_tt       = -(1/n) sum_i (x_t^2 - x_max^2/3) w_{i,t}
///   d/d Theta_tu (t!=u)= -(2/n) sum_i x_t x_u (w_{i,t} + w_{i,u})
/// The off-diagonal entry sums the contributions of nodes t and u, which is
/// the derivative of the loss under the symmetric parameterization; the
/// result is exactly symmetric.
inline LossGradient gradient(const ExtendedParams& params, const Dataset& data) {
  const MatrixXd weights = detail::term_weights(params, data);
  const MatrixXd& X = data.X;
  const int n = data.n();
  const double c2 = centering_constants(data.bounds.x_max).second;
  const double inv_n = 1.0 / static_cast<double>(n);

  LossGradient g;
  const MatrixXd wx = weights.cwiseProduct(X);
  g.d_units = -inv_n * wx;

  MatrixXd cross = wx.transpose() * X;  // cross(t,u) = sum_i x_t x_u w_{i,t}
  g.d_population = -2.0 * inv_n * (cross + cross.transpose());
  const MatrixXd centered_sq = X.cwiseProduct(X).array() - c2;
  g.d_population.diagonal() = -inv_n * centered_sq.cwiseProduct(weights).colwise().sum();
  return g;
}

/// Idealized objective E[L(candidate)] where each unit's observation is
/// integrated over the normalized conditional density
/// f(x | z^(i)) ~ exp(theta*' x + x' Theta* x) on the box, via tensor
/// Gauss-Legendre quadrature. Restricted to p <= 2 where the tensor grid is
/// exact and cheap; this is the oracle behind the proper-loss checks.
inline double expected_loss_quadrature(const ExtendedParams& candidate,
                                       const ExtendedParams& truth, const Dims& dims,
                                       const Bounds& bounds, int nodes) {
  dims.check();
  bounds.check();
  const int p = dims.p();
  if (p > 2) throw UnsupportedDimension("expected_loss_quadrature: supports p <= 2");
  if (nodes < 8) throw InvalidArgument("expected_loss_quadrature: need at least 8 nodes");
  if (candidate.p() != p || truth.p() != p || candidate.n() != dims.n || truth.n() != dims.n)
    throw InvalidArgument("expected_loss_quadrature: shape mismatch");

  const QuadratureRule rule = gauss_legendre(nodes, bounds.x_max);
  const double c2 = centering_constants(bounds.x_max).second;
  const MatrixXd& theta_true = truth.population.mat();
  const MatrixXd& theta_cand = candidate.population.mat();

  auto term_sum = [&](const VectorXd& field, const VectorXd& x) {
    double s = 0.0;
    for (int t = 0; t < p; ++t) {
      double cross = 0.0;
      for (int u = 0; u < p; ++u)
        if (u != t) cross += theta_cand(t, u) * x[u];
      s += std::exp(-(field[t] + 2.0 * cross) * x[t] -
                    theta_cand(t, t) * (x[t] * x[t] - c2));
    }
    return s;
  };

  double total = 0.0;
  VectorXd x(p);
  for (int i = 0; i < dims.n; ++i) {
    const VectorXd field_true = truth.units.rows.row(i).transpose();
    const VectorXd field_cand = candidate.units.rows.row(i).transpose();
    double z = 0.0;
    double numer = 0.0;
    const int m = (p == 2) ? nodes : 1;
    for (int a = 0; a < nodes; ++a) {
      for (int b = 0; b < m; ++b) {
        x[0] = rule.nodes[a];
        double w = rule.weights[a];
        if (p == 2) {
          x[1] = rule.nodes[b];
          w *= rule.weights[b];
        }
        const double density = std::exp(field_true.dot(x) + x.dot(theta_true * x));
        z += w * density;
        numer += w * density * term_sum(field_cand, x);
      }
    }
    if (!(z > 0.0) || !std::isfinite(z))
      throw NumericUnderflow("expected_loss_quadrature: degenerate normalization");
    total += numer / z;
  }
  return total / static_cast<double>(dims.n);
}

}  // namespace pairfield
