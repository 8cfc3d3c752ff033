#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pairfield/core/errors.hpp"
#include "pairfield/core/metrics.hpp"
#include "pairfield/core/types.hpp"
#include "pairfield/loss.hpp"
#include "pairfield/numerics/parallel.hpp"

namespace pairfield {

struct FitConfig {
  int max_iters = 2000;
  double step_init = 1.0;
  double tol_grad = 1e-7;
  double tol_obj = 1e-10;
  double backtrack_factor = 0.5;
  int dykstra_rounds = 5;
  std::uint64_t seed = 0;

  void check() const {
    if (max_iters < 1) throw InvalidArgument("FitConfig: max_iters must be >= 1");
    if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0))
      throw InvalidArgument("FitConfig: backtrack_factor must be in (0,1)");
    if (!(step_init > 0.0)) throw InvalidArgument("FitConfig: step_init must be positive");
    if (dykstra_rounds < 1) throw InvalidArgument("FitConfig: dykstra_rounds must be >= 1");
    if (tol_grad < 0.0 || tol_obj < 0.0)
      throw InvalidArgument("FitConfig: tolerances must be nonnegative");
  }
};

struct FitReport {
  int iterations = 0;
  double final_loss = 0.0;
  double grad_map_norm = 0.0;
  std::vector<double> trace;  // non-increasing: every entry is an accepted loss
  bool feasible = false;
  std::string stop_reason;
};

/// Euclidean projection onto the infinity-ball: entrywise clip to [-alpha, alpha].
inline MatrixXd project_unit_fields(const MatrixXd& m, double alpha) {
  if (!(alpha > 0.0)) throw InvalidArgument("project_unit_fields: alpha must be positive");
  return m.cwiseMax(-alpha).cwiseMin(alpha);
}

/// Euclidean projection onto the l1 ball of the given radius via
/// sort-and-threshold. Returns the input unchanged when already feasible.
inline VectorXd project_l1_ball(const VectorXd& v, double radius) {
  if (radius < 0.0) throw InvalidArgument("project_l1_ball: radius must be nonnegative");
  if (v.lpNorm<1>() <= radius) return v;
  if (radius == 0.0) return VectorXd::Zero(v.size());
  std::vector<double> mags(v.size());
  for (int k = 0; k < v.size(); ++k) mags[k] = std::abs(v[k]);
  std::sort(mags.begin(), mags.end(), std::greater<double>());
  double cumulative = 0.0;
  double threshold = 0.0;
  for (std::size_t j = 0; j < mags.size(); ++j) {
    cumulative += mags[j];
    const double candidate = (cumulative - radius) / static_cast<double>(j + 1);
    if (mags[j] - candidate > 0.0) threshold = candidate;
  }
  VectorXd out(v.size());
  for (int k = 0; k < v.size(); ++k) {
    const double shrunk = std::max(std::abs(v[k]) - threshold, 0.0);
    out[k] = (v[k] < 0.0) ? -shrunk : shrunk;
  }
  return out;
}

namespace detail {

inline void symmetrize_in_place(MatrixXd& m) { m = (0.5 * (m + m.transpose())).eval(); }

/// Forces exact membership in all three constraint sets. Row scaling by
/// min(s_t, s_u) keeps symmetry while capping every row l1 norm at beta.
inline MatrixXd enforce_population_feasibility(MatrixXd m, const Bounds& bounds) {
  symmetrize_in_place(m);
  m = m.cwiseMax(-bounds.alpha).cwiseMin(bounds.alpha);
  const int p = static_cast<int>(m.rows());
  VectorXd scale(p);
  for (int t = 0; t < p; ++t) {
    const double row_l1 = m.row(t).lpNorm<1>();
    scale[t] = (row_l1 > bounds.beta) ? bounds.beta / row_l1 : 1.0;
  }
  for (int t = 0; t < p; ++t)
    for (int u = 0; u < p; ++u) m(t, u) *= std::min(scale[t], scale[u]);
  return m;
}

}  // namespace detail

/// Approximate Euclidean projection onto the interaction-matrix constraint set
/// (symmetric, entrywise |.| <= alpha, row l1 <= beta) by Dykstra's
/// alternating projections over the three sets, followed by a pass that
/// enforces exact feasibility. Idempotent on feasible inputs.
inline PopulationMatrix project_population(const MatrixXd& t_in, const Bounds& bounds,
                                           int rounds) {
  bounds.check();
  if (t_in.rows() != t_in.cols()) throw InvalidArgument("project_population: square matrix required");
  if (rounds < 1) throw InvalidArgument("project_population: rounds must be >= 1");
  const int p = static_cast<int>(t_in.rows());
  MatrixXd z = t_in;
  MatrixXd inc_sym = MatrixXd::Zero(p, p);
  MatrixXd inc_box = MatrixXd::Zero(p, p);
  MatrixXd inc_row = MatrixXd::Zero(p, p);
  for (int r = 0; r < rounds; ++r) {
    MatrixXd y = z + inc_sym;
    detail::symmetrize_in_place(y);
    inc_sym = (z + inc_sym) - y;
    z = y;

    y = (z + inc_box).cwiseMax(-bounds.alpha).cwiseMin(bounds.alpha);
    inc_box = (z + inc_box) - y;
    z = y;

    y = z + inc_row;
    for (int t = 0; t < p; ++t)
      y.row(t) = project_l1_ball(y.row(t).transpose(), bounds.beta).transpose();
    inc_row = (z + inc_row) - y;
    z = y;
  }
  return PopulationMatrix(detail::enforce_population_feasibility(std::move(z), bounds));
}

namespace detail {

/// Backtracking projected gradient descent over a generic state. The step is
/// halved until the candidate does not increase the objective, and grown by
/// the inverse factor after clean accepts so it tracks the local curvature.
template <typename State, typename LossFn, typename StepFn, typename NormFn>
FitReport descend(State& x, const LossFn& loss_of, const StepFn& project_step,
                  const NormFn& step_norm, const FitConfig& cfg) {
  cfg.check();
  FitReport report;
  double current = loss_of(x);
  if (!std::isfinite(current))
    throw NumericOverflow("pgd: non-finite loss at initialization");
  report.trace.push_back(current);
  double eta = cfg.step_init;
  for (int k = 0; k < cfg.max_iters; ++k) {
    bool stalled = false;
    State candidate = x;
    double cand_loss = current;
    int halvings = 0;
    for (;;) {
      candidate = project_step(x, eta);
      cand_loss = loss_of(candidate);
      if (!std::isfinite(cand_loss))
        throw NumericOverflow("pgd: non-finite loss at iteration " + std::to_string(k));
      if (cand_loss <= current) break;
      eta *= cfg.backtrack_factor;
      ++halvings;
      if (eta < 1e-18) {
        stalled = true;
        break;
      }
    }
    if (stalled) {
      report.stop_reason = "step-stalled";
      break;
    }
    const double moved = step_norm(x, candidate);
    report.grad_map_norm = moved / eta;
    x = candidate;
    const double previous = current;
    current = cand_loss;
    report.trace.push_back(current);
    report.iterations = k + 1;
    if (halvings == 0) eta = std::min(eta / cfg.backtrack_factor, 1e8);
    if (report.grad_map_norm <= cfg.tol_grad) {
      report.stop_reason = "gradient";
      break;
    }
    if (previous - current <= cfg.tol_obj * std::max(1.0, std::abs(previous))) {
      report.stop_reason = "objective";
      break;
    }
  }
  if (report.stop_reason.empty()) report.stop_reason = "max-iters";
  report.final_loss = current;
  return report;
}

}  // namespace detail

/// Projected gradient descent over the full variable (per-unit fields, Theta)
/// starting from zero. The unit-field block steps along the per-unit loss
/// gradients (the pooled gradient scaled by n), which keeps the two blocks on
/// comparable scales for any n; the box projection is exact under this
/// diagonal rescaling, so the iteration remains a valid projected descent on
/// the convex objective. Every iterate is feasible.
inline std::pair<ExtendedParams, FitReport> pgd_fit(const Dataset& data, const Bounds& bounds,
                                                    const FitConfig& cfg) {
  bounds.check();
  const int n = data.n(), p = data.p();
  ExtendedParams state = ExtendedParams::zero(n, p);
  bool all_feasible = true;

  auto loss_of = [&](const ExtendedParams& s) { return loss_value(s, data); };
  auto project_step = [&](const ExtendedParams& s, double eta) {
    const LossGradient g = gradient(s, data);
    MatrixXd fields = s.units.rows - eta * static_cast<double>(n) * g.d_units;
    fields = project_unit_fields(fields, bounds.alpha);
    PopulationMatrix theta = project_population(s.population.mat() - eta * g.d_population,
                                                bounds, cfg.dykstra_rounds);
    ExtendedParams next(std::move(theta), std::move(fields));
    all_feasible = all_feasible && validate(next, bounds).ok();
    return next;
  };
  auto step_norm = [](const ExtendedParams& a, const ExtendedParams& b) {
    return std::sqrt((a.units.rows - b.units.rows).squaredNorm() +
                     (a.population.mat() - b.population.mat()).squaredNorm());
  };

  FitReport report = detail::descend(state, loss_of, project_step, step_norm, cfg);
  report.feasible = all_feasible && validate(state, bounds).ok();
  return {std::move(state), std::move(report)};
}

namespace detail {

struct SharedState {
  VectorXd phi;
  MatrixXd theta;
};

}  // namespace detail

/// The i.i.d. special case: all unit rows tied to one field vector phi. The
/// tied-field gradient is the average of the per-unit field gradients, so on
/// n identical copies of one sample this reproduces the pgd_fit iterates
/// step for step.
inline std::tuple<VectorXd, PopulationMatrix, FitReport> pgd_fit_shared(
    const Dataset& data, const Bounds& bounds, const FitConfig& cfg) {
  bounds.check();
  const int n = data.n(), p = data.p();
  detail::SharedState state{VectorXd::Zero(p), MatrixXd::Zero(p, p)};
  bool all_feasible = true;

  auto expand = [&](const detail::SharedState& s) {
    return ExtendedParams(PopulationMatrix(s.theta),
                          VectorXd::Ones(n) * s.phi.transpose());
  };
  auto loss_of = [&](const detail::SharedState& s) { return loss_value(expand(s), data); };
  auto project_step = [&](const detail::SharedState& s, double eta) {
    const LossGradient g = gradient(expand(s), data);
    // Average of the per-unit field gradients (n * d_units rows) over i is
    // the column sum of d_units.
    const VectorXd phi_grad = g.d_units.colwise().sum().transpose();
    detail::SharedState next;
    next.phi = (s.phi - eta * phi_grad).cwiseMax(-bounds.alpha).cwiseMin(bounds.alpha);
    next.theta =
        project_population(s.theta - eta * g.d_population, bounds, cfg.dykstra_rounds).mat();
    all_feasible = all_feasible && validate(expand(next), bounds).ok();
    return next;
  };
  auto step_norm = [](const detail::SharedState& a, const detail::SharedState& b) {
    return std::sqrt((a.phi - b.phi).squaredNorm() + (a.theta - b.theta).squaredNorm());
  };

  FitReport report = detail::descend(state, loss_of, project_step, step_norm, cfg);
  ExtendedParams full = expand(state);
  report.feasible = all_feasible && validate(full, bounds).ok();
  return {state.phi, PopulationMatrix(state.theta), std::move(report)};
}

namespace detail {

/// Box-constrained PGD for a smooth scalar objective of a small vector, with
/// per-coordinate bounds. The first frozen_prefix coordinates stay at their
/// initial value.
inline std::pair<VectorXd, FitReport> box_pgd_bounds(
    const VectorXd& x0, const VectorXd& lower, const VectorXd& upper,
    const std::function<double(const VectorXd&)>& f,
    const std::function<VectorXd(const VectorXd&)>& grad, const FitConfig& cfg,
    int frozen_prefix = 0) {
  const VectorXd frozen = x0.head(frozen_prefix);
  auto loss_of = f;
  auto project_step = [&](const VectorXd& x, double eta) {
    VectorXd next = x - eta * grad(x);
    next = next.cwiseMax(lower).cwiseMin(upper);
    next.head(frozen_prefix) = frozen;
    return next;
  };
  auto step_norm = [](const VectorXd& a, const VectorXd& b) { return (a - b).norm(); };
  VectorXd x = x0;
  FitReport report = descend(x, loss_of, project_step, step_norm, cfg);
  return {std::move(x), std::move(report)};
}

/// Symmetric-box convenience wrapper.
inline std::pair<VectorXd, FitReport> box_pgd(
    const VectorXd& x0, double box, const std::function<double(const VectorXd&)>& f,
    const std::function<VectorXd(const VectorXd&)>& grad, const FitConfig& cfg,
    int frozen_prefix = 0) {
  return box_pgd_bounds(x0, VectorXd::Constant(x0.size(), -box),
                        VectorXd::Constant(x0.size(), box), f, grad, cfg, frozen_prefix);
}

}  // namespace detail

/// Second-stage estimator: with Theta fixed at theta_hat, minimizes each
/// unit's objective over its field independently (n separate convex
/// problems, run in parallel). Coordinates with x_t = 0 have zero gradient
/// and stay at the zero initialization.
inline UnitFields fit_unit_fields(const PopulationMatrix& theta_hat, const Dataset& data,
                                  const Bounds& bounds, const FitConfig& cfg) {
  bounds.check();
  cfg.check();
  if (theta_hat.p() != data.p()) throw InvalidArgument("fit_unit_fields: dimension mismatch");
  const int n = data.n(), p = data.p();
  const double c2 = centering_constants(data.bounds.x_max).second;
  const MatrixXd& theta = theta_hat.mat();
  MatrixXd fields(n, p);
  parallel_for(n, [&](int i) {
    const VectorXd x = data.X.row(i).transpose();
    const VectorXd tx = theta * x;
    VectorXd base_exponent(p);  // exponent at zero field, fixed per unit
    for (int t = 0; t < p; ++t) {
      const double cross = tx[t] - theta(t, t) * x[t];
      base_exponent[t] = -2.0 * cross * x[t] - theta(t, t) * (x[t] * x[t] - c2);
    }
    auto f = [&](const VectorXd& field) {
      return (base_exponent - field.cwiseProduct(x)).array().exp().sum();
    };
    auto grad = [&](const VectorXd& field) {
      const VectorXd w = (base_exponent - field.cwiseProduct(x)).array().exp();
      return (-x.cwiseProduct(w)).eval();
    };
    auto [field, report] = detail::box_pgd(VectorXd::Zero(p), bounds.alpha, f, grad, cfg);
    fields.row(i) = field.transpose();
  });
  return UnitFields{std::move(fields)};
}

}  // namespace pairfield
