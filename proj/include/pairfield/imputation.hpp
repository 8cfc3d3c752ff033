#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "pairfield/core/errors.hpp"
#include "pairfield/core/metrics.hpp"
#include "pairfield/core/types.hpp"
#include "pairfield/loss.hpp"
#include "pairfield/numerics/parallel.hpp"
#include "pairfield/optimizer.hpp"
#include "pairfield/sampler.hpp"

namespace pairfield {

/// Known-vector basis expressing a corrupted unit's field as a linear
/// combination: columns are [phi_hat, -2 Phi_hat_1, ..., -2 Phi_hat_{p_v}].
/// kappa = lambda_min(B'B) / p conditions the coefficient recovery.
struct BasisMatrix {
  MatrixXd B;  // p x (p_v + 1)
  double kappa = 0.0;

  int p_v() const { return static_cast<int>(B.cols()) - 1; }
};

inline BasisMatrix build_B(const VectorXd& phi_hat, const MatrixXd& Phi_hat, int p_v) {
  const int p = static_cast<int>(phi_hat.size());
  if (Phi_hat.rows() != p || Phi_hat.cols() != p)
    throw InvalidArgument("build_B: Phi must be p x p matching phi");
  if (p_v < 0 || p_v > p) throw InvalidArgument("build_B: p_v must be in [0, p]");
  BasisMatrix basis;
  basis.B.resize(p, p_v + 1);
  basis.B.col(0) = phi_hat;
  for (int k = 0; k < p_v; ++k) basis.B.col(k + 1) = -2.0 * Phi_hat.row(k).transpose();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eigen(basis.B.transpose() * basis.B);
  basis.kappa = eigen.eigenvalues().minCoeff() / static_cast<double>(p);
  return basis;
}

struct MeasurementErrorFit {
  VectorXd delta_v_hat;  // the coefficients beyond the pinned leading 1
  VectorXd theta_hat;    // = B a, bitwise
  VectorXd coefficients; // a, with a[0] == 1 exactly
};

/// Recovers one corrupted unit's measurement error by minimizing its
/// objective over the coefficient space: field constrained to B a with the
/// leading coefficient pinned to 1 and the rest box-bounded by alpha.
/// use_support_box additionally intersects each coefficient's box with
/// [x_k - x_max, x_k + x_max]: the latent clean covariate x_k - delta_k must
/// itself lie in the support. With one sample per unit this cuts the error of
/// the unconstrained coefficients by an order of magnitude.
inline MeasurementErrorFit fit_measurement_error(const BasisMatrix& basis, const VectorXd& x_i,
                                                 const PopulationMatrix& population,
                                                 const Bounds& bounds, const FitConfig& cfg,
                                                 bool use_support_box = false) {
  bounds.check();
  cfg.check();
  const int p = population.p();
  if (basis.B.rows() != p || x_i.size() != p)
    throw InvalidArgument("fit_measurement_error: dimension mismatch");
  const int p_v = basis.p_v();

  auto f = [&](const VectorXd& a) {
    return loss_unit(basis.B * a, population, x_i, bounds.x_max);
  };
  const double c2 = centering_constants(bounds.x_max).second;
  const MatrixXd& theta = population.mat();
  const VectorXd tx = theta * x_i;
  auto grad = [&](const VectorXd& a) {
    const VectorXd field = basis.B * a;
    VectorXd g_field(p);
    for (int t = 0; t < p; ++t) {
      const double cross = tx[t] - theta(t, t) * x_i[t];
      const double w = std::exp(-(field[t] + 2.0 * cross) * x_i[t] -
                                theta(t, t) * (x_i[t] * x_i[t] - c2));
      g_field[t] = -x_i[t] * w;
    }
    return (basis.B.transpose() * g_field).eval();
  };

  VectorXd lower = VectorXd::Constant(p_v + 1, -bounds.alpha);
  VectorXd upper = VectorXd::Constant(p_v + 1, bounds.alpha);
  if (use_support_box) {
    for (int k = 0; k < p_v; ++k) {
      lower[k + 1] = std::max(lower[k + 1], x_i[k] - bounds.x_max);
      upper[k + 1] = std::min(upper[k + 1], x_i[k] + bounds.x_max);
    }
  }
  VectorXd a0 = VectorXd::Zero(p_v + 1);
  a0[0] = 1.0;
  a0 = a0.cwiseMax(lower).cwiseMin(upper);
  a0[0] = 1.0;
  auto [a, report] = detail::box_pgd_bounds(a0, lower, upper, f, grad, cfg,
                                            /*frozen_prefix=*/1);
  MeasurementErrorFit fit;
  fit.coefficients = std::move(a);
  fit.delta_v_hat = fit.coefficients.tail(fit.coefficients.size() - 1);
  fit.theta_hat = basis.B * fit.coefficients;
  return fit;
}

struct ImputeMetrics {
  double kappa = 0.0;
  bool kappa_warning = false;
  double stage1_loss = 0.0;
  int stage1_iterations = 0;
  int theta_max_row_l0 = 0;
  bool has_truth = false;
  double theta_2inf_error = 0.0;
  double field_max_mse = 0.0;
  double delta_v_max_sq_error = 0.0;
};

struct ImputeResult {
  VectorXd phi_hat;
  PopulationMatrix theta_hat;
  MatrixXd unit_fields;   // n x p
  MatrixXd delta_v_hat;   // n x p_v, zero rows for clean units
  ImputeMetrics metrics;
};

struct PipelineConfig {
  FitConfig fit;
  double kappa_warn = 0.05;
  /// Clamp each coefficient to the range implied by the latent covariate's
  /// support. Off by default: the plain coefficient box is the reference
  /// estimator and the one whose errors scale cleanly with dimension.
  bool use_support_box = false;
};

/// Full measurement-error pipeline: fit (phi, Theta) on the clean units with
/// the tied-field estimator, build the known-vector basis, then recover each
/// corrupted unit's coefficients independently. Clean units get delta_v = 0
/// and field phi_hat directly. When the generating truth is supplied the
/// worst-case errors are recorded in the metrics.
inline ImputeResult impute_pipeline(const Dataset& data,
                                    const std::vector<std::uint8_t>& clean_mask,
                                    const Bounds& bounds, const PipelineConfig& cfg,
                                    const SimTruth* truth = nullptr) {
  if (static_cast<int>(clean_mask.size()) != data.n())
    throw InvalidArgument("impute_pipeline: mask length must equal n");
  std::vector<int> clean_rows;
  for (int i = 0; i < data.n(); ++i)
    if (clean_mask[i]) clean_rows.push_back(i);
  if (clean_rows.size() < 2)
    throw InvalidArgument("impute_pipeline: need at least 2 clean units");

  const int p = data.p();
  const int p_v = data.dims.p_v;
  MatrixXd clean_x(clean_rows.size(), p);
  for (std::size_t r = 0; r < clean_rows.size(); ++r) clean_x.row(r) = data.X.row(clean_rows[r]);
  Dims clean_dims = data.dims;
  clean_dims.n = static_cast<int>(clean_rows.size());
  const Dataset clean_data = Dataset::make(std::move(clean_x), clean_dims, data.bounds);

  auto [phi_hat, theta_hat, report] = pgd_fit_shared(clean_data, bounds, cfg.fit);
  const BasisMatrix basis = build_B(phi_hat, theta_hat.mat(), p_v);

  ImputeResult result;
  result.phi_hat = phi_hat;
  result.theta_hat = theta_hat;
  result.unit_fields.resize(data.n(), p);
  result.delta_v_hat = MatrixXd::Zero(data.n(), p_v);

  std::vector<int> corrupted;
  for (int i = 0; i < data.n(); ++i) {
    if (clean_mask[i]) {
      result.unit_fields.row(i) = phi_hat.transpose();
    } else {
      corrupted.push_back(i);
    }
  }
  parallel_for(static_cast<int>(corrupted.size()), [&](int k) {
    const int i = corrupted[k];
    const MeasurementErrorFit fit = fit_measurement_error(
        basis, data.X.row(i).transpose(), theta_hat, bounds, cfg.fit, cfg.use_support_box);
    result.unit_fields.row(i) = fit.theta_hat.transpose();
    result.delta_v_hat.row(i) = fit.delta_v_hat.transpose();
  });

  ImputeMetrics& metrics = result.metrics;
  metrics.kappa = basis.kappa;
  metrics.kappa_warning = basis.kappa < cfg.kappa_warn;
  metrics.stage1_loss = report.final_loss;
  metrics.stage1_iterations = report.iterations;
  for (int t = 0; t < p; ++t) {
    const int nnz = static_cast<int>((theta_hat.mat().row(t).cwiseAbs().array() > 1e-12).count());
    metrics.theta_max_row_l0 = std::max(metrics.theta_max_row_l0, nnz);
  }

  if (truth != nullptr) {
    metrics.has_truth = true;
    metrics.theta_2inf_error = norm_2inf(result.theta_hat.mat() - truth->joint.Phi);
    const BasisMatrix true_basis = build_B(truth->joint.phi, truth->joint.Phi, p_v);
    for (int i = 0; i < data.n(); ++i) {
      VectorXd a_true(p_v + 1);
      a_true[0] = 1.0;
      a_true.tail(p_v) = truth->delta_v.row(i).transpose();
      const VectorXd field_true = true_basis.B * a_true;
      metrics.field_max_mse =
          std::max(metrics.field_max_mse, mse(result.unit_fields.row(i).transpose(), field_true));
      metrics.delta_v_max_sq_error =
          std::max(metrics.delta_v_max_sq_error,
                   (result.delta_v_hat.row(i) - truth->delta_v.row(i)).squaredNorm());
    }
  }
  return result;
}

}  // namespace pairfield
