#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "pairfield/core/errors.hpp"
#include "pairfield/core/metrics.hpp"
#include "pairfield/core/types.hpp"
#include "pairfield/loss.hpp"
#include "pairfield/numerics/gauss_legendre.hpp"
#include "pairfield/numerics/rng.hpp"
#include "pairfield/optimizer.hpp"
#include "pairfield/sampler.hpp"

namespace pairfield {

struct LambdaMinConfig {
  enum class Method { Quadrature, MonteCarlo };
  Method method = Method::Quadrature;
  int nodes = 64;
  int mc_samples = 20000;
  GibbsConfig gibbs;
};

struct LambdaMinResult {
  double value = 0.0;
  double stderr_estimate = 0.0;  // zero for quadrature
  std::string method;
};

namespace detail {

inline VectorXd tilde_statistic(const VectorXd& x, int t, double c2) {
  const int p = static_cast<int>(x.size());
  VectorXd out(p + 1);
  out[0] = x[t];
  int k = 1;
  for (int u = 0; u < p; ++u)
    if (u != t) out[k++] = 2.0 * x[u] * x[t];
  out[p] = x[t] * x[t] - c2;
  return out;
}

}  // namespace detail

/// Smallest eigenvalue of the conditional autocorrelation matrix of
/// (x_t, 2 x_{-t} x_t, x_t^2 - x_max^2/3) under the model with the given
/// field. Spot-checks the non-singularity assumption for one (field, t) pair;
/// exact tensor quadrature for p <= 3, Gibbs Monte-Carlo with a batch-means
/// error estimate otherwise.
inline LambdaMinResult lambda_min_check(const VectorXd& field, const PopulationMatrix& population,
                                        int t, double x_max, const LambdaMinConfig& cfg = {}) {
  const int p = population.p();
  if (field.size() != p) throw InvalidArgument("lambda_min_check: field must have length p");
  if (t < 0 || t >= p) throw InvalidArgument("lambda_min_check: index out of range");
  if (!(x_max > 0.0)) throw InvalidArgument("lambda_min_check: x_max must be positive");
  const double c2 = centering_constants(x_max).second;
  const MatrixXd& theta = population.mat();

  MatrixXd moment = MatrixXd::Zero(p + 1, p + 1);
  LambdaMinResult result;

  if (cfg.method == LambdaMinConfig::Method::Quadrature) {
    if (p > 3)
      throw UnsupportedDimension("lambda_min_check: quadrature supports p <= 3, use Monte-Carlo");
    if (cfg.nodes < 8) throw InvalidArgument("lambda_min_check: need at least 8 nodes");
    const QuadratureRule rule = gauss_legendre(cfg.nodes, x_max);
    double z = 0.0;
    VectorXd x(p);
    const int m1 = (p >= 2) ? cfg.nodes : 1;
    const int m2 = (p >= 3) ? cfg.nodes : 1;
    for (int a = 0; a < cfg.nodes; ++a)
      for (int b = 0; b < m1; ++b)
        for (int c = 0; c < m2; ++c) {
          x[0] = rule.nodes[a];
          double w = rule.weights[a];
          if (p >= 2) {
            x[1] = rule.nodes[b];
            w *= rule.weights[b];
          }
          if (p >= 3) {
            x[2] = rule.nodes[c];
            w *= rule.weights[c];
          }
          const double density = std::exp(field.dot(x) + x.dot(theta * x));
          const VectorXd tilde = detail::tilde_statistic(x, t, c2);
          moment.noalias() += (w * density) * (tilde * tilde.transpose());
          z += w * density;
        }
    if (!(z > 0.0)) throw NumericUnderflow("lambda_min_check: degenerate normalization");
    moment /= z;
    result.method = "quadrature";
  } else {
    if (cfg.mc_samples < 100)
      throw InvalidArgument("lambda_min_check: need at least 100 Monte-Carlo samples");
    // Bounds wide enough for the supplied parameters; only x_max matters.
    Bounds wide;
    wide.alpha = std::max({1.0, field.cwiseAbs().maxCoeff(), theta.cwiseAbs().maxCoeff()}) + 1.0;
    wide.beta = theta.cwiseAbs().rowwise().sum().maxCoeff() + 1.0;
    wide.x_max = x_max;
    JointParams params{field, theta};
    const Dims dims{p, 0, 0, std::max(1, cfg.mc_samples)};
    const MatrixXd draws = gibbs_sample(params, cfg.mc_samples, dims, wide, cfg.gibbs);
    for (int s = 0; s < draws.rows(); ++s) {
      const VectorXd tilde = detail::tilde_statistic(draws.row(s).transpose(), t, c2);
      moment.noalias() += tilde * tilde.transpose();
    }
    moment /= static_cast<double>(draws.rows());
    result.method = "monte-carlo";

    Eigen::SelfAdjointEigenSolver<MatrixXd> pre(moment);
    int min_index = 0;
    pre.eigenvalues().minCoeff(&min_index);
    const VectorXd v = pre.eigenvectors().col(min_index);
    // Batch means of the Rayleigh quotient at the minimizing direction.
    const int batches = 20;
    const int per_batch = std::max(1, static_cast<int>(draws.rows()) / batches);
    std::vector<double> batch_vals;
    for (int b = 0; b < batches; ++b) {
      double acc = 0.0;
      int count = 0;
      for (int s = b * per_batch; s < std::min<int>((b + 1) * per_batch, draws.rows()); ++s) {
        const VectorXd tilde = detail::tilde_statistic(draws.row(s).transpose(), t, c2);
        const double proj = v.dot(tilde);
        acc += proj * proj;
        ++count;
      }
      if (count > 0) batch_vals.push_back(acc / count);
    }
    double mean = 0.0;
    for (double b : batch_vals) mean += b;
    mean /= batch_vals.size();
    double var = 0.0;
    for (double b : batch_vals) var += (b - mean) * (b - mean);
    var /= std::max<std::size_t>(1, batch_vals.size() - 1);
    result.stderr_estimate = std::sqrt(var / batch_vals.size());
  }

  Eigen::SelfAdjointEigenSolver<MatrixXd> eigen(moment);
  result.value = eigen.eigenvalues().minCoeff();
  return result;
}

struct DobrushinResult {
  double value = 0.0;
  bool pass = false;
};

/// Coupling-matrix bound 2 sqrt(2) x_max^2 || |Theta| ||_op with the weak
/// dependence threshold 1/2.
inline DobrushinResult dobrushin_bound(const PopulationMatrix& population, double x_max) {
  if (!(x_max > 0.0)) throw InvalidArgument("dobrushin_bound: x_max must be positive");
  const MatrixXd abs_theta = population.mat().cwiseAbs();
  double opnorm = 0.0;
  if (abs_theta.rows() > 0) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eigen(abs_theta);
    opnorm = eigen.eigenvalues().cwiseAbs().maxCoeff();
  }
  DobrushinResult result;
  result.value = 2.0 * std::sqrt(2.0) * x_max * x_max * opnorm;
  result.pass = result.value <= 0.5;
  return result;
}

struct ProperLossProbe {
  double value_at_truth = 0.0;
  double min_gap = 0.0;        // min over perturbations of E[L(perturbed)] - E[L(truth)]
  double grad_norm = 0.0;      // finite-difference gradient norm at the truth
  int perturbations = 0;
};

/// Evaluates the idealized objective at the truth and at random feasible
/// perturbations. Under a proper loss the gap never drops below zero (up to
/// quadrature error) and the gradient at the truth vanishes.
inline ProperLossProbe proper_loss_probe(const ExtendedParams& truth, const Dims& dims,
                                         const Bounds& bounds, int n_perturb, double magnitude,
                                         int nodes, std::uint64_t seed = 0) {
  const int p = dims.p();
  if (p > 2) throw UnsupportedDimension("proper_loss_probe: supports p <= 2");
  ProperLossProbe probe;
  probe.value_at_truth = expected_loss_quadrature(truth, truth, dims, bounds, nodes);
  probe.perturbations = n_perturb;

  Rng rng(seed);
  double min_gap = 0.0;
  bool first = true;
  for (int k = 0; k < n_perturb; ++k) {
    MatrixXd fields = truth.units.rows;
    for (int i = 0; i < fields.rows(); ++i)
      for (int t = 0; t < p; ++t) fields(i, t) += magnitude * rng.uniform(-1.0, 1.0);
    MatrixXd theta = truth.population.mat();
    for (int t = 0; t < p; ++t)
      for (int u = t; u < p; ++u) {
        const double bump = magnitude * rng.uniform(-1.0, 1.0);
        theta(t, u) += bump;
        if (u != t) theta(u, t) += bump;
      }
    ExtendedParams candidate(project_population(theta, bounds, 50),
                             project_unit_fields(fields, bounds.alpha));
    const double value = expected_loss_quadrature(candidate, truth, dims, bounds, nodes);
    const double gap = value - probe.value_at_truth;
    min_gap = first ? gap : std::min(min_gap, gap);
    first = false;
  }
  probe.min_gap = first ? 0.0 : min_gap;

  // Central finite differences over every free coordinate at the truth.
  const double h = 1e-5;
  double grad_sq = 0.0;
  auto eval_at = [&](const MatrixXd& fields, const MatrixXd& theta) {
    return expected_loss_quadrature(ExtendedParams(PopulationMatrix(theta, 1e-6), fields), truth,
                                    dims, bounds, nodes);
  };
  for (int i = 0; i < dims.n; ++i)
    for (int t = 0; t < p; ++t) {
      MatrixXd up = truth.units.rows, down = truth.units.rows;
      up(i, t) += h;
      down(i, t) -= h;
      const double d =
          (eval_at(up, truth.population.mat()) - eval_at(down, truth.population.mat())) /
          (2.0 * h);
      grad_sq += d * d;
    }
  for (int t = 0; t < p; ++t)
    for (int u = t; u < p; ++u) {
      MatrixXd up = truth.population.mat(), down = truth.population.mat();
      up(t, u) += h;
      down(t, u) -= h;
      if (u != t) {
        up(u, t) += h;
        down(u, t) -= h;
      }
      const double d = (eval_at(truth.units.rows, up) - eval_at(truth.units.rows, down)) /
                       (2.0 * h);
      grad_sq += d * d;
    }
  probe.grad_norm = std::sqrt(grad_sq);
  return probe;
}

}  // namespace pairfield
