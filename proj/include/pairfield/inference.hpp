#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "pairfield/core/errors.hpp"
#include "pairfield/core/types.hpp"
#include "pairfield/numerics/gauss_legendre.hpp"
#include "pairfield/numerics/parallel.hpp"
#include "pairfield/numerics/rng.hpp"
#include "pairfield/sampler.hpp"

namespace pairfield {

/// Estimated conditional distribution of a unit's outcome block under an
/// intervention: density ~ exp(psi' y + y' Psi y) on the outcome box.
struct OutcomeConditional {
  VectorXd psi;
  MatrixXd Psi;
  double x_max = 1.0;

  int p_y() const { return static_cast<int>(psi.size()); }
};

/// Assembles the outcome conditional for one unit from the fitted parameters:
/// psi collects the outcome slice of the unit field plus the covariate and
/// intervention interactions, Psi is the outcome-outcome block. Changing the
/// intervention moves psi only.
inline OutcomeConditional conditional_outcome_params(const VectorXd& theta_hat_unit,
                                                     const PopulationMatrix& population,
                                                     const VectorXd& v_i, const VectorXd& a_alt,
                                                     const Dims& dims, double x_max) {
  dims.check();
  const int p = dims.p();
  if (theta_hat_unit.size() != p || population.p() != p || v_i.size() != dims.p_v ||
      a_alt.size() != dims.p_a)
    throw InvalidArgument("conditional_outcome_params: dimension mismatch");
  const MatrixXd& theta = population.mat();
  const int y0 = dims.y_offset();
  OutcomeConditional cond;
  cond.x_max = x_max;
  cond.Psi = theta.block(y0, y0, dims.p_y, dims.p_y);
  cond.psi = theta_hat_unit.segment(y0, dims.p_y) +
             2.0 * theta.block(0, y0, dims.p_v, dims.p_y).transpose() * v_i +
             2.0 * theta.block(dims.a_offset(), y0, dims.p_a, dims.p_y).transpose() * a_alt;
  return cond;
}

/// Expected outcome under the conditional by tensor Gauss-Legendre
/// quadrature. Deterministic; limited to p_y <= 3.
inline VectorXd mean_outcome_quadrature(const OutcomeConditional& cond, int nodes) {
  const int d = cond.p_y();
  if (d == 0) return VectorXd();
  if (d > 3)
    throw UnsupportedDimension("mean_outcome_quadrature: p_y > 3, use mean_outcome_gibbs");
  if (nodes < 8) throw InvalidArgument("mean_outcome_quadrature: need at least 8 nodes");
  const QuadratureRule rule = gauss_legendre(nodes, cond.x_max);

  // Stabilizing shift: exponent bound on the box.
  const double shift = cond.psi.lpNorm<1>() * cond.x_max +
                       cond.Psi.cwiseAbs().sum() * cond.x_max * cond.x_max;
  double z = 0.0;
  VectorXd moment = VectorXd::Zero(d);
  VectorXd y(d);
  const int m1 = (d >= 2) ? nodes : 1;
  const int m2 = (d >= 3) ? nodes : 1;
  for (int a = 0; a < nodes; ++a)
    for (int b = 0; b < m1; ++b)
      for (int c = 0; c < m2; ++c) {
        y[0] = rule.nodes[a];
        double w = rule.weights[a];
        if (d >= 2) {
          y[1] = rule.nodes[b];
          w *= rule.weights[b];
        }
        if (d >= 3) {
          y[2] = rule.nodes[c];
          w *= rule.weights[c];
        }
        const double density = std::exp(cond.psi.dot(y) + y.dot(cond.Psi * y) - shift);
        z += w * density;
        moment += (w * density) * y;
      }
  if (!(z > 0.0) || !std::isfinite(z))
    throw NumericUnderflow("mean_outcome_quadrature: degenerate partition value");
  return moment / z;
}

/// Monte-Carlo estimate of the outcome mean with batch-means standard errors,
/// for outcome blocks too large for tensor quadrature.
inline std::pair<VectorXd, VectorXd> mean_outcome_gibbs(const OutcomeConditional& cond,
                                                        const GibbsConfig& cfg, int n_samples) {
  cfg.check();
  if (n_samples < 100) throw InvalidArgument("mean_outcome_gibbs: need at least 100 samples");
  const int d = cond.p_y();
  Rng rng(cfg.seed);
  VectorXd y = VectorXd::Zero(d);
  auto sweep = [&] {
    for (int t = 0; t < d; ++t) {
      const double cross = cond.Psi.row(t).dot(y) - cond.Psi(t, t) * y[t];
      y[t] = sample_coord(cond.psi[t] + 2.0 * cross, cond.Psi(t, t), cond.x_max, rng,
                          cfg.grid_nodes);
    }
  };
  for (int s = 0; s < cfg.burn_in; ++s) sweep();

  const int batches = std::max(4, static_cast<int>(std::sqrt(static_cast<double>(n_samples))));
  const int per_batch = n_samples / batches;
  MatrixXd batch_means = MatrixXd::Zero(batches, d);
  VectorXd mean = VectorXd::Zero(d);
  for (int b = 0; b < batches; ++b) {
    VectorXd acc = VectorXd::Zero(d);
    for (int s = 0; s < per_batch; ++s) {
      for (int k = 0; k < cfg.thin; ++k) sweep();
      acc += y;
    }
    batch_means.row(b) = (acc / per_batch).transpose();
  }
  mean = batch_means.colwise().mean().transpose();
  VectorXd stderr_out(d);
  for (int k = 0; k < d; ++k) {
    const double var =
        (batch_means.col(k).array() - mean[k]).square().sum() / (batches - 1);
    stderr_out[k] = std::sqrt(var / batches);
  }
  return {std::move(mean), std::move(stderr_out)};
}

struct CounterfactualOptions {
  int quadrature_nodes = 64;
  int mc_samples = 4000;
  /// The outcome-block chain is low dimensional and mixes quickly, so the
  /// Monte-Carlo path defaults to a lighter schedule than data generation.
  GibbsConfig gibbs{200, 2, 0, 128};
  /// When set (n x p_v), replaces the observed covariates, e.g. with imputed
  /// values v_bar - delta_v_hat. Defaults to the observed block.
  const MatrixXd* covariate_override = nullptr;
};

/// Expected potential outcomes per unit under the alternate interventions:
/// row i of the result is the mean outcome with unit i's field and covariates
/// held fixed and its intervention replaced by alt.row(i). Dispatches to
/// quadrature for p_y <= 3 and Gibbs otherwise.
inline MatrixXd estimate_counterfactuals(const ExtendedParams& fit, const Dataset& data,
                                         const MatrixXd& alt_interventions,
                                         const CounterfactualOptions& opts = {}) {
  const Dims& dims = data.dims;
  if (fit.n() != data.n() || fit.p() != data.p())
    throw InvalidArgument("estimate_counterfactuals: fit/data shape mismatch");
  if (alt_interventions.rows() != data.n() || alt_interventions.cols() != dims.p_a)
    throw InvalidArgument("estimate_counterfactuals: alt interventions must be n x p_a");
  if (opts.covariate_override &&
      (opts.covariate_override->rows() != data.n() || opts.covariate_override->cols() != dims.p_v))
    throw InvalidArgument("estimate_counterfactuals: covariate override must be n x p_v");

  MatrixXd mu(data.n(), dims.p_y);
  parallel_for(data.n(), [&](int i) {
    const VectorXd v = opts.covariate_override
                           ? opts.covariate_override->row(i).transpose()
                           : data.X.row(i).head(dims.p_v).transpose().eval();
    const OutcomeConditional cond = conditional_outcome_params(
        fit.units.rows.row(i).transpose(), fit.population, v,
        alt_interventions.row(i).transpose(), dims, data.bounds.x_max);
    if (dims.p_y <= 3) {
      mu.row(i) = mean_outcome_quadrature(cond, opts.quadrature_nodes).transpose();
    } else {
      GibbsConfig unit_cfg = opts.gibbs;
      unit_cfg.seed = derive_seed(opts.gibbs.seed, {0xCFu, static_cast<std::uint64_t>(i)});
      mu.row(i) = mean_outcome_gibbs(cond, unit_cfg, opts.mc_samples).first.transpose();
    }
  });
  return mu;
}

}  // namespace pairfield
