#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "pairfield/core/errors.hpp"
#include "pairfield/core/metrics.hpp"
#include "pairfield/core/types.hpp"
#include "pairfield/numerics/rng.hpp"

namespace pairfield {

struct GibbsConfig {
  int burn_in = 500;
  int thin = 10;
  std::uint64_t seed = 0;
  int grid_nodes = 512;

  void check() const {
    if (burn_in < 0) throw InvalidArgument("GibbsConfig: burn_in must be nonnegative");
    if (thin < 1) throw InvalidArgument("GibbsConfig: thin must be positive");
    if (grid_nodes < 64) throw InvalidArgument("GibbsConfig: grid_nodes must be >= 64");
  }
};

/// Unnormalized per-coordinate conditional density x -> exp(eta x + q x^2)
/// on [-x_max, x_max].
struct TiltedDensity {
  double eta = 0.0;
  double q = 0.0;
  double x_max = 1.0;

  double operator()(double x) const { return std::exp(eta * x + q * x * x); }
};

/// Trapezoid-integrated cumulative table of a TiltedDensity on a uniform
/// grid. cdf is normalized to [0, 1]; draws invert it with linear
/// interpolation.
struct TiltedCdfTable {
  std::vector<double> xs;
  std::vector<double> cdf;

  double inverse(double u) const {
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.begin()) return xs.front();
    if (it == cdf.end()) return xs.back();
    const std::size_t j = static_cast<std::size_t>(it - cdf.begin());
    const double gap = cdf[j] - cdf[j - 1];
    const double frac = gap > 0.0 ? (u - cdf[j - 1]) / gap : 0.5;
    return xs[j - 1] + frac * (xs[j] - xs[j - 1]);
  }
};

inline TiltedCdfTable tilted_cdf_table(double eta, double q, double x_max, int grid_nodes) {
  if (!std::isfinite(eta) || !std::isfinite(q))
    throw InvalidArgument("tilted_cdf_table: parameters must be finite");
  TiltedCdfTable table;
  const int g = grid_nodes;
  table.xs.resize(g + 1);
  table.cdf.resize(g + 1);
  const double h = 2.0 * x_max / g;
  Eigen::Map<Eigen::ArrayXd> xs(table.xs.data(), g + 1);
  xs = Eigen::ArrayXd::LinSpaced(g + 1, -x_max, x_max);
  // Shift exponents by their max over the grid so extreme tilts stay finite.
  Eigen::ArrayXd exponent = eta * xs + q * xs.square();
  exponent -= exponent.maxCoeff();
  const Eigen::ArrayXd values = exponent.exp();
  table.cdf[0] = 0.0;
  for (int j = 1; j <= g; ++j)
    table.cdf[j] = table.cdf[j - 1] + 0.5 * h * (values[j - 1] + values[j]);
  const double total = table.cdf[g];
  if (!(total > 0.0) || !std::isfinite(total))
    throw NumericUnderflow("tilted_cdf_table: degenerate normalization");
  for (double& c : table.cdf) c /= total;
  return table;
}

/// One inverse-CDF draw from the tilted conditional. Deterministic given the
/// generator state.
inline double sample_coord(double eta, double q, double x_max, Rng& rng, int grid_nodes = 512) {
  const TiltedCdfTable table = tilted_cdf_table(eta, q, x_max, grid_nodes);
  return table.inverse(rng.u01());
}

namespace detail {

inline void check_joint_feasible(const JointParams& params, const Bounds& bounds) {
  params.check_shapes();
  const double slack = 1e-9;
  if (params.phi.cwiseAbs().maxCoeff() > bounds.alpha + slack)
    throw InvalidArgument("gibbs_sample: phi violates the entry bound");
  if (params.Phi.size() > 0 && params.Phi.cwiseAbs().maxCoeff() > bounds.alpha + slack)
    throw InvalidArgument("gibbs_sample: Phi violates the entry bound");
  for (int t = 0; t < params.p(); ++t)
    if (params.Phi.row(t).lpNorm<1>() > bounds.beta + slack)
      throw InvalidArgument("gibbs_sample: Phi violates the row l1 bound");
}

}  // namespace detail

/// Systematic-scan Gibbs sampler for f(w) ~ exp(phi' w + w' Phi w) truncated
/// to the box. A single sequential chain: one retained sample every `thin`
/// sweeps after `burn_in` sweeps.
inline MatrixXd gibbs_sample(const JointParams& params, int n_samples, const Dims& dims,
                             const Bounds& bounds, const GibbsConfig& cfg) {
  cfg.check();
  bounds.check();
  detail::check_joint_feasible(params, bounds);
  if (n_samples < 1) throw InvalidArgument("gibbs_sample: n_samples must be >= 1");
  const int p = params.p();
  if (dims.p() != p) throw InvalidArgument("gibbs_sample: dims disagree with parameters");

  Rng rng(cfg.seed);
  VectorXd x = VectorXd::Zero(p);
  auto sweep = [&] {
    for (int t = 0; t < p; ++t) {
      const double cross = params.Phi.row(t).dot(x) - params.Phi(t, t) * x[t];
      const double eta = params.phi[t] + 2.0 * cross;
      x[t] = sample_coord(eta, params.Phi(t, t), bounds.x_max, rng, cfg.grid_nodes);
    }
  };
  for (int s = 0; s < cfg.burn_in; ++s) sweep();
  MatrixXd out(n_samples, p);
  for (int i = 0; i < n_samples; ++i) {
    for (int s = 0; s < cfg.thin; ++s) sweep();
    out.row(i) = x.transpose();
  }
  return out;
}

struct GeneratedTruth {
  JointParams joint;
  double kappa = 0.0;
  int attempts = 0;
};

namespace detail {

/// One documented rescaling pass: clip entries to alpha, scale the whole
/// matrix so the largest row l1 norm meets the budget, then add delta to the
/// diagonal. The global scalar makes the pass invariant to the input's
/// overall scale.
inline MatrixXd rescale_interaction(MatrixXd m, const Bounds& bounds, double delta) {
  m = m.cwiseMax(-bounds.alpha).cwiseMin(bounds.alpha);
  const double row_budget = 0.9 * (bounds.beta - delta);
  double max_row = 0.0;
  for (int t = 0; t < m.rows(); ++t) max_row = std::max(max_row, m.row(t).lpNorm<1>());
  if (max_row > 0.0) m *= row_budget / max_row;
  m.diagonal().array() += delta;
  return m;
}

/// Smallest eigenvalue of B'B / p for the known-vector basis
/// B = [phi, -2 Phi_1, ..., -2 Phi_{p_v}]. Needs p_v < p; with all p rows the
/// Gram is p x (p+1) and singular by construction.
inline double basis_kappa(const JointParams& params, int p_v) {
  const int p = params.p();
  MatrixXd basis(p, p_v + 1);
  basis.col(0) = params.phi;
  for (int k = 0; k < p_v; ++k) basis.col(k + 1) = -2.0 * params.Phi.row(k).transpose();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eigen(basis.transpose() * basis);
  return eigen.eigenvalues().minCoeff() / static_cast<double>(p);
}

}  // namespace detail

/// Random positive definite interaction truth for simulations: phi* is the
/// all-ones vector (clipped to alpha) and Phi* = rescaled Wishart + delta I,
/// with delta sized so the basis conditioning constant kappa clears the
/// target. Retries fresh seeds up to 50 times. kappa depends on the covariate
/// block size; p_v < 0 selects the default ratio p/4.
inline GeneratedTruth generate_spd_interaction(int p, const Bounds& bounds, double target_kappa,
                                               std::uint64_t seed, int p_v = -1) {
  bounds.check();
  if (p < 1) throw InvalidArgument("generate_spd_interaction: p must be >= 1");
  if (p_v < 0) p_v = std::max(1, p / 4);
  if (p_v >= p + 1)
    throw InvalidArgument("generate_spd_interaction: p_v must be at most p");
  const double delta =
      std::max(0.1, 0.55 * std::sqrt(std::max(target_kappa, 0.0) * static_cast<double>(p)));
  if (delta > 0.75 * bounds.beta)
    throw GenerationFailure("generate_spd_interaction: kappa target infeasible at these bounds",
                            0.0);

  double best_kappa = -1.0;
  for (int attempt = 0; attempt < 50; ++attempt) {
    Rng rng(derive_seed(seed, {0x5bd1u, static_cast<std::uint64_t>(attempt)}));
    MatrixXd a(p, p);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) a(i, j) = rng.normal();
    MatrixXd m = (a.transpose() * a) / static_cast<double>(p);
    m = detail::rescale_interaction(std::move(m), bounds, delta);

    JointParams params;
    params.phi = VectorXd::Constant(p, std::min(1.0, bounds.alpha));
    params.Phi = 0.5 * (m + m.transpose());

    Eigen::SelfAdjointEigenSolver<MatrixXd> eigen(params.Phi);
    const bool pd = eigen.eigenvalues().minCoeff() > 0.0;
    bool bounded = params.Phi.cwiseAbs().maxCoeff() <= bounds.alpha;
    for (int t = 0; t < p && bounded; ++t)
      bounded = params.Phi.row(t).lpNorm<1>() <= bounds.beta;

    const double kappa = detail::basis_kappa(params, p_v);
    best_kappa = std::max(best_kappa, kappa);
    if (pd && bounded && kappa >= target_kappa)
      return {std::move(params), kappa, attempt + 1};
  }
  throw GenerationFailure("generate_spd_interaction: retries exhausted", best_kappa);
}

/// Generator-side truth of a measurement-error study: the joint parameters,
/// the injected errors (zero rows exactly where clean_mask is true), and the
/// reported conditioning constant.
struct SimTruth {
  JointParams joint;
  MatrixXd delta_v;                  // n x p_v
  std::vector<std::uint8_t> clean_mask;  // true for units n/2 .. n-1
  double kappa = 0.0;
};

struct SimStudyConfig {
  double target_kappa = 0.1;
  GibbsConfig gibbs;
  std::uint64_t seed = 0;
};

/// Draws n box-truncated samples from a generated truth, then corrupts the
/// covariate block of the first n/2 units with additive errors uniform on
/// [0.9, 1]. The observed support widens to x_max + 1 for validation; the
/// model bounds are unchanged.
inline std::pair<Dataset, SimTruth> simulate_measurement_study(int p, int p_v, int n,
                                                               const Bounds& bounds,
                                                               const SimStudyConfig& cfg) {
  bounds.check();
  if (n < 2 || n % 2 != 0) throw InvalidArgument("simulate_measurement_study: n must be even");
  if (p_v < 0 || p_v >= p) throw InvalidArgument("simulate_measurement_study: need p_v < p");
  if ((p - p_v) % 2 != 0)
    throw InvalidArgument("simulate_measurement_study: p - p_v must be even");
  const int p_a = (p - p_v) / 2;
  const Dims dims{p_v, p_a, p_a, n};

  GeneratedTruth truth =
      generate_spd_interaction(p, bounds, cfg.target_kappa, derive_seed(cfg.seed, {1}), p_v);
  GibbsConfig gibbs = cfg.gibbs;
  gibbs.seed = derive_seed(cfg.seed, {2});
  MatrixXd x = gibbs_sample(truth.joint, n, dims, bounds, gibbs);

  SimTruth sim;
  sim.joint = std::move(truth.joint);
  sim.kappa = truth.kappa;
  sim.delta_v = MatrixXd::Zero(n, p_v);
  sim.clean_mask.assign(n, 0);
  for (int i = 0; i < n; ++i) {
    if (i < n / 2) {
      Rng unit_rng(derive_seed(cfg.seed, {3, static_cast<std::uint64_t>(i)}));
      for (int k = 0; k < p_v; ++k) sim.delta_v(i, k) = unit_rng.uniform(0.9, 1.0);
      x.row(i).head(p_v) += sim.delta_v.row(i);
    } else {
      sim.clean_mask[i] = 1;
    }
  }
  Dataset data = Dataset::make(std::move(x), dims, bounds, bounds.x_max + 1.0);
  return {std::move(data), std::move(sim)};
}

}  // namespace pairfield
