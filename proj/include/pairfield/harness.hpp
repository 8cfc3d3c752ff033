#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pairfield/core/errors.hpp"
#include "pairfield/core/metrics.hpp"
#include "pairfield/core/types.hpp"
#include "pairfield/imputation.hpp"
#include "pairfield/io.hpp"
#include "pairfield/numerics/parallel.hpp"
#include "pairfield/numerics/rng.hpp"
#include "pairfield/optimizer.hpp"
#include "pairfield/sampler.hpp"

namespace pairfield {

enum class Study { ThetaMatrixVsN, ThetaVectorVsN, DeltaVVsN, SharedRecovery };

inline std::string study_name(Study s) {
  switch (s) {
    case Study::ThetaMatrixVsN: return "theta_matrix_vs_n";
    case Study::ThetaVectorVsN: return "theta_vector_vs_n";
    case Study::DeltaVVsN: return "delta_v_vs_n";
    case Study::SharedRecovery: return "shared_recovery";
  }
  throw InvalidArgument("study_name: unknown study");
}

inline Study study_from_name(const std::string& name) {
  if (name == "theta_matrix_vs_n") return Study::ThetaMatrixVsN;
  if (name == "theta_vector_vs_n") return Study::ThetaVectorVsN;
  if (name == "delta_v_vs_n") return Study::DeltaVVsN;
  if (name == "shared_recovery") return Study::SharedRecovery;
  throw InvalidArgument("study_from_name: unknown study '" + name + "'");
}

struct GridPoint {
  int p = 0;
  int p_v = 0;
  int n = 0;
};

struct ExperimentConfig {
  Study study = Study::ThetaMatrixVsN;
  std::vector<GridPoint> grid;
  int trials = 5;
  Bounds bounds;
  FitConfig fit;
  GibbsConfig gibbs;
  double target_kappa = 0.1;
  double kappa_warn = 0.05;
  std::uint64_t master_seed = 0;

  void check() const {
    if (grid.empty()) throw InvalidArgument("ExperimentConfig: empty grid");
    if (trials < 1) throw InvalidArgument("ExperimentConfig: trials must be >= 1");
    bounds.check();
    fit.check();
    gibbs.check();
  }
};

struct MetricRecord {
  int p = 0;
  int p_v = 0;
  int n = 0;
  int trial = 0;
  std::string metric;
  double value = 0.0;
};

struct CellFailure {
  GridPoint cell;
  int trial = 0;
  std::string message;
};

struct MetricAggregate {
  GridPoint cell;
  std::string metric;
  double mean = 0.0;
  double stderr_ = 0.0;
  int count = 0;
};

struct ExperimentResult {
  Study study = Study::ThetaMatrixVsN;
  std::vector<MetricRecord> records;
  std::vector<CellFailure> failures;
  std::vector<MetricAggregate> aggregates;
};

namespace detail {

inline std::vector<MetricRecord> run_cell(const ExperimentConfig& cfg, const GridPoint& cell,
                                          int trial) {
  const std::uint64_t seed =
      derive_seed(cfg.master_seed,
                  {static_cast<std::uint64_t>(cfg.study), static_cast<std::uint64_t>(cell.p),
                   static_cast<std::uint64_t>(cell.p_v), static_cast<std::uint64_t>(cell.n),
                   static_cast<std::uint64_t>(trial)});
  std::vector<MetricRecord> records;
  auto emit = [&](const std::string& metric, double value) {
    records.push_back({cell.p, cell.p_v, cell.n, trial, metric, value});
  };

  if (cfg.study == Study::SharedRecovery) {
    const GeneratedTruth truth =
        generate_spd_interaction(cell.p, cfg.bounds, cfg.target_kappa, derive_seed(seed, {1}));
    const int p_rest = (cell.p - cell.p_v) / 2;
    const Dims dims{cell.p_v, p_rest, cell.p - cell.p_v - p_rest, cell.n};
    GibbsConfig gibbs = cfg.gibbs;
    gibbs.seed = derive_seed(seed, {2});
    const Dataset data =
        Dataset::make(gibbs_sample(truth.joint, cell.n, dims, cfg.bounds, gibbs), dims,
                      cfg.bounds);
    auto [phi_hat, theta_hat, report] = pgd_fit_shared(data, cfg.bounds, cfg.fit);
    emit("theta_matrix_2inf", norm_2inf(theta_hat.mat() - truth.joint.Phi));
    emit("phi_mse", mse(phi_hat, truth.joint.phi));
    emit("final_loss", report.final_loss);
    return records;
  }

  SimStudyConfig sim_cfg;
  sim_cfg.target_kappa = cfg.target_kappa;
  sim_cfg.gibbs = cfg.gibbs;
  sim_cfg.seed = seed;
  auto [data, truth] = simulate_measurement_study(cell.p, cell.p_v, cell.n, cfg.bounds, sim_cfg);
  PipelineConfig pipeline{cfg.fit, cfg.kappa_warn};
  const ImputeResult result = impute_pipeline(data, truth.clean_mask, cfg.bounds, pipeline, &truth);
  emit("theta_matrix_2inf", result.metrics.theta_2inf_error);
  emit("theta_vector_max_mse", result.metrics.field_max_mse);
  emit("delta_v_max_sq", result.metrics.delta_v_max_sq_error);
  return records;
}

}  // namespace detail

/// Runs every (grid point, trial) task, recording three metrics per task.
/// Tasks are dispatched to the worker pool with per-cell derived seeds and
/// slot-indexed results, so the output is identical for any worker count. A
/// failing cell is recorded and the study continues.
inline ExperimentResult run_study(const ExperimentConfig& cfg) {
  cfg.check();
  ExperimentResult result;
  result.study = cfg.study;

  struct Slot {
    std::vector<MetricRecord> records;
    std::string error;
  };
  const int tasks = static_cast<int>(cfg.grid.size()) * cfg.trials;
  std::vector<Slot> slots(tasks);
  parallel_for(tasks, [&](int task) {
    const GridPoint& cell = cfg.grid[task / cfg.trials];
    const int trial = task % cfg.trials;
    try {
      slots[task].records = detail::run_cell(cfg, cell, trial);
    } catch (const std::exception& e) {
      slots[task].error = e.what();
    }
  });

  for (int task = 0; task < tasks; ++task) {
    const GridPoint& cell = cfg.grid[task / cfg.trials];
    const int trial = task % cfg.trials;
    if (!slots[task].error.empty()) {
      result.failures.push_back({cell, trial, slots[task].error});
      continue;
    }
    for (auto& rec : slots[task].records) result.records.push_back(rec);
  }

  // Mean and +-1 standard error per (grid point, metric), in grid order.
  for (const GridPoint& cell : cfg.grid) {
    std::map<std::string, std::vector<double>> by_metric;
    for (const auto& rec : result.records)
      if (rec.p == cell.p && rec.p_v == cell.p_v && rec.n == cell.n)
        by_metric[rec.metric].push_back(rec.value);
    for (const auto& [metric, values] : by_metric) {
      MetricAggregate agg;
      agg.cell = cell;
      agg.metric = metric;
      agg.count = static_cast<int>(values.size());
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= values.size();
      double var = 0.0;
      for (double v : values) var += (v - mean) * (v - mean);
      agg.mean = mean;
      agg.stderr_ = values.size() > 1
                        ? std::sqrt(var / (values.size() - 1) / values.size())
                        : 0.0;
      result.aggregates.push_back(agg);
    }
  }
  return result;
}

/// Ordinary least squares on (log x, log y). Requires at least two strictly
/// positive points.
inline std::pair<double, double> fit_slope(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) throw InvalidArgument("fit_slope: need at least 2 points");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : points) {
    if (!(x > 0.0) || !(y > 0.0))
      throw InvalidArgument("fit_slope: points must be strictly positive");
    const double lx = std::log(x);
    const double ly = std::log(y);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double n = static_cast<double>(points.size());
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw InvalidArgument("fit_slope: degenerate abscissae");
  const double slope = (n * sxy - sx * sy) / denom;
  const double intercept = (sy - slope * sx) / n;
  return {slope, intercept};
}

// ---------------------------------------------------------------------------
// Serialization for the bench outputs.

inline std::string results_to_csv(const ExperimentResult& result) {
  std::ostringstream out;
  out << "study,p,p_v,n,trial,metric,value\n";
  for (const auto& rec : result.records)
    out << study_name(result.study) << ',' << rec.p << ',' << rec.p_v << ',' << rec.n << ','
        << rec.trial << ',' << rec.metric << ',' << format_double(rec.value) << '\n';
  return out.str();
}

inline json experiment_config_to_json(const ExperimentConfig& cfg) {
  json grid = json::array();
  for (const auto& cell : cfg.grid)
    grid.push_back(json{{"p", cell.p}, {"p_v", cell.p_v}, {"n", cell.n}});
  return json{{"study", study_name(cfg.study)},
              {"grid", grid},
              {"trials", cfg.trials},
              {"bounds", bounds_to_json(cfg.bounds)},
              {"fit", fit_config_to_json(cfg.fit)},
              {"gibbs", gibbs_config_to_json(cfg.gibbs)},
              {"target_kappa", cfg.target_kappa},
              {"kappa_warn", cfg.kappa_warn},
              {"master_seed", cfg.master_seed}};
}

inline ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig cfg;
  cfg.study = study_from_name(j.at("study").get<std::string>());
  for (const auto& cell : j.at("grid"))
    cfg.grid.push_back(
        {cell.at("p").get<int>(), cell.at("p_v").get<int>(), cell.at("n").get<int>()});
  if (j.contains("trials")) cfg.trials = j.at("trials").get<int>();
  cfg.bounds = bounds_from_json(j.at("bounds"));
  if (j.contains("fit")) cfg.fit = fit_config_from_json(j.at("fit"));
  if (j.contains("gibbs")) cfg.gibbs = gibbs_config_from_json(j.at("gibbs"));
  if (j.contains("target_kappa")) cfg.target_kappa = j.at("target_kappa").get<double>();
  if (j.contains("kappa_warn")) cfg.kappa_warn = j.at("kappa_warn").get<double>();
  if (j.contains("master_seed")) cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
  cfg.check();
  return cfg;
}

inline json provenance_json(const json& config, std::uint64_t master_seed) {
  return json{{"library_version", kLibraryVersion},
              {"master_seed", master_seed},
              {"config", config}};
}

}  // namespace pairfield
