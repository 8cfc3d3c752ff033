// Command-line interface: simulate | fit | impute | counterfactual |
// diagnose | bench. Every subcommand reads JSON configs, honors the
// PAIRFIELD_SEED and PAIRFIELD_WORKERS environment overrides, and writes
// outputs atomically. Exit codes: 0 success, 1 usage error, 2 numeric
// failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pairfield/pairfield.hpp"

namespace fs = std::filesystem;
using pairfield::json;

namespace {

std::optional<std::uint64_t> env_seed_override() {
  if (const char* env = std::getenv("PAIRFIELD_SEED")) {
    try {
      return static_cast<std::uint64_t>(std::stoull(env));
    } catch (...) {
      throw pairfield::InvalidArgument("PAIRFIELD_SEED must be an unsigned integer");
    }
  }
  return std::nullopt;
}

json load_json(const std::string& path) {
  return json::parse(pairfield::read_text(path));
}

pairfield::Dims dims_from_bounds_json(const json& j, int n) {
  pairfield::Dims dims;
  dims.p_v = j.at("p_v").get<int>();
  dims.p_a = j.at("p_a").get<int>();
  dims.p_y = j.at("p_y").get<int>();
  dims.n = n;
  dims.check();
  return dims;
}

struct SimulateArgs {
  std::string config_path;
  std::string out_dir;
};

int run_simulate(const SimulateArgs& args) {
  const json cfg = load_json(args.config_path);
  const int p = cfg.at("p").get<int>();
  const int p_v = cfg.at("p_v").get<int>();
  const int n = cfg.at("n").get<int>();
  const pairfield::Bounds bounds = pairfield::bounds_from_json(
      cfg.contains("bounds") ? cfg.at("bounds") : cfg);

  pairfield::SimStudyConfig sim;
  if (cfg.contains("target_kappa")) sim.target_kappa = cfg.at("target_kappa").get<double>();
  if (cfg.contains("gibbs")) sim.gibbs = pairfield::gibbs_config_from_json(cfg.at("gibbs"));
  if (cfg.contains("seed")) sim.seed = cfg.at("seed").get<std::uint64_t>();
  if (auto seed = env_seed_override()) sim.seed = *seed;

  auto [data, truth] = pairfield::simulate_measurement_study(p, p_v, n, bounds, sim);

  const fs::path dir(args.out_dir);
  pairfield::write_dataset_csv(dir / "data.csv", data);
  pairfield::atomic_write_text(dir / "truth.json",
                               pairfield::sim_truth_to_json(truth, data.dims, bounds).dump(2));
  json prov_cfg = cfg;
  prov_cfg["seed"] = sim.seed;
  pairfield::atomic_write_text(dir / "provenance.json",
                               pairfield::provenance_json(prov_cfg, sim.seed).dump(2));
  std::cout << "wrote " << (dir / "data.csv").string() << " (" << n << " x " << p
            << "), truth.json, provenance.json\n";
  return 0;
}

struct FitArgs {
  std::string data_path;
  std::string bounds_path;
  std::string out_path;
  std::string config_path;
  std::string mode = "joint";
  double support_halfwidth = -1.0;
};

int run_fit(const FitArgs& args) {
  const json bounds_json = load_json(args.bounds_path);
  const pairfield::Bounds bounds = pairfield::bounds_from_json(bounds_json);
  const pairfield::CsvMatrix csv = pairfield::csv_to_matrix(pairfield::read_text(args.data_path));
  const pairfield::Dims dims = dims_from_bounds_json(bounds_json, static_cast<int>(csv.values.rows()));
  const pairfield::Dataset data =
      pairfield::Dataset::make(csv.values, dims, bounds, args.support_halfwidth);

  pairfield::FitConfig fit_cfg;
  if (!args.config_path.empty())
    fit_cfg = pairfield::fit_config_from_json(load_json(args.config_path));
  if (auto seed = env_seed_override()) fit_cfg.seed = *seed;

  pairfield::ExtendedParams params;
  pairfield::FitReport report;
  if (args.mode == "joint") {
    std::tie(params, report) = pairfield::pgd_fit(data, bounds, fit_cfg);
  } else if (args.mode == "shared") {
    auto [phi, theta, rep] = pairfield::pgd_fit_shared(data, bounds, fit_cfg);
    params = pairfield::ExtendedParams(theta,
                                       pairfield::VectorXd::Ones(data.n()) * phi.transpose());
    report = rep;
  } else if (args.mode == "two-stage") {
    std::tie(params, report) = pairfield::pgd_fit(data, bounds, fit_cfg);
    params = pairfield::ExtendedParams(
        params.population,
        pairfield::fit_unit_fields(params.population, data, bounds, fit_cfg).rows);
  } else {
    throw pairfield::InvalidArgument("fit: unknown mode '" + args.mode + "'");
  }

  json out = pairfield::fit_to_json(params, dims, bounds);
  out["report"] = pairfield::fit_report_to_json(report);
  pairfield::atomic_write_text(args.out_path, out.dump(2));
  std::cout << "fit: loss " << report.final_loss << " after " << report.iterations
            << " iterations (" << report.stop_reason << "), wrote " << args.out_path << "\n";
  return 0;
}

struct ImputeArgs {
  std::string data_path;
  std::string mask_path;
  std::string bounds_path;
  std::string out_dir;
  std::string truth_path;
  std::string config_path;
  bool support_box = false;
};

int run_impute(const ImputeArgs& args) {
  const json bounds_json = load_json(args.bounds_path);
  const pairfield::Bounds bounds = pairfield::bounds_from_json(bounds_json);
  const pairfield::CsvMatrix csv = pairfield::csv_to_matrix(pairfield::read_text(args.data_path));
  const pairfield::Dims dims = dims_from_bounds_json(bounds_json, static_cast<int>(csv.values.rows()));
  // Observed covariates can carry additive error up to 1, so validation of
  // the observed support is widened by that amount.
  const pairfield::Dataset data =
      pairfield::Dataset::make(csv.values, dims, bounds, bounds.x_max + 1.0);

  const pairfield::CsvMatrix mask_csv =
      pairfield::csv_to_matrix(pairfield::read_text(args.mask_path));
  if (mask_csv.values.cols() != 1 || mask_csv.values.rows() != data.n())
    throw pairfield::InvalidArgument("impute: mask.csv must have one 0/1 column with n rows");
  std::vector<std::uint8_t> clean_mask(data.n());
  for (int i = 0; i < data.n(); ++i) clean_mask[i] = mask_csv.values(i, 0) != 0.0;

  pairfield::PipelineConfig pipeline;
  if (!args.config_path.empty()) {
    const json cfg = load_json(args.config_path);
    pipeline.fit = pairfield::fit_config_from_json(cfg.contains("fit") ? cfg.at("fit") : cfg);
    if (cfg.contains("kappa_warn")) pipeline.kappa_warn = cfg.at("kappa_warn").get<double>();
    if (cfg.contains("use_support_box"))
      pipeline.use_support_box = cfg.at("use_support_box").get<bool>();
  }
  pipeline.use_support_box = pipeline.use_support_box || args.support_box;
  if (auto seed = env_seed_override()) pipeline.fit.seed = *seed;

  std::optional<pairfield::SimTruth> truth;
  if (!args.truth_path.empty())
    truth = pairfield::sim_truth_from_json(load_json(args.truth_path));

  const pairfield::ImputeResult result = pairfield::impute_pipeline(
      data, clean_mask, bounds, pipeline, truth ? &*truth : nullptr);

  const fs::path dir(args.out_dir);
  pairfield::atomic_write_text(
      dir / "fit.json",
      pairfield::fit_to_json(
          pairfield::ExtendedParams(result.theta_hat, result.unit_fields), dims, bounds)
          .dump(2));
  pairfield::atomic_write_text(
      dir / "delta_v.csv",
      pairfield::matrix_to_csv(result.delta_v_hat,
                               pairfield::numbered_header("dv", dims.p_v)));
  json metrics{{"kappa", result.metrics.kappa},
               {"kappa_warning", result.metrics.kappa_warning},
               {"stage1_loss", result.metrics.stage1_loss},
               {"stage1_iterations", result.metrics.stage1_iterations},
               {"theta_max_row_l0", result.metrics.theta_max_row_l0}};
  if (result.metrics.has_truth) {
    metrics["theta_2inf_error"] = result.metrics.theta_2inf_error;
    metrics["theta_vector_max_mse"] = result.metrics.field_max_mse;
    metrics["delta_v_max_sq_error"] = result.metrics.delta_v_max_sq_error;
  }
  pairfield::atomic_write_text(dir / "metrics.json", metrics.dump(2));
  if (result.metrics.kappa_warning)
    std::cerr << "warning: basis conditioning kappa=" << result.metrics.kappa
              << " below threshold " << pipeline.kappa_warn << "\n";
  std::cout << "impute: kappa " << result.metrics.kappa << ", wrote fit.json, delta_v.csv, "
            << "metrics.json under " << dir.string() << "\n";
  return 0;
}

struct CounterfactualArgs {
  std::string fit_path;
  std::string data_path;
  std::string alt_path;
  std::string out_path;
  std::string delta_v_path;
  int nodes = 64;
  double support_halfwidth = -1.0;
};

int run_counterfactual(const CounterfactualArgs& args) {
  const pairfield::FitFile fit = pairfield::fit_from_json(load_json(args.fit_path));
  const pairfield::CsvMatrix csv = pairfield::csv_to_matrix(pairfield::read_text(args.data_path));
  pairfield::Dims dims = fit.dims;
  dims.n = static_cast<int>(csv.values.rows());
  if (dims.n != fit.dims.n)
    throw pairfield::InvalidArgument("counterfactual: fit.json and data.csv disagree on n");
  const double support =
      args.support_halfwidth > 0.0 ? args.support_halfwidth : fit.bounds.x_max + 1.0;
  const pairfield::Dataset data =
      pairfield::Dataset::make(csv.values, dims, fit.bounds, support);

  const pairfield::CsvMatrix alt_csv =
      pairfield::csv_to_matrix(pairfield::read_text(args.alt_path));
  if (alt_csv.values.rows() != data.n() || alt_csv.values.cols() != dims.p_a)
    throw pairfield::InvalidArgument("counterfactual: alt.csv must be n x p_a");

  pairfield::CounterfactualOptions opts;
  opts.quadrature_nodes = args.nodes;
  if (auto seed = env_seed_override()) opts.gibbs.seed = *seed;

  // Optional substitution of imputed covariates v_obs - delta_v_hat for the
  // observed block.
  pairfield::MatrixXd imputed_v;
  if (!args.delta_v_path.empty()) {
    const pairfield::CsvMatrix dv =
        pairfield::csv_to_matrix(pairfield::read_text(args.delta_v_path));
    if (dv.values.rows() != data.n() || dv.values.cols() != dims.p_v)
      throw pairfield::InvalidArgument("counterfactual: delta_v.csv must be n x p_v");
    imputed_v = data.X.leftCols(dims.p_v) - dv.values;
    opts.covariate_override = &imputed_v;
  }

  const pairfield::MatrixXd mu =
      pairfield::estimate_counterfactuals(fit.params, data, alt_csv.values, opts);
  pairfield::atomic_write_text(
      args.out_path, pairfield::matrix_to_csv(mu, pairfield::numbered_header("mu", dims.p_y)));
  std::cout << "counterfactual: wrote " << args.out_path << " (" << mu.rows() << " x "
            << mu.cols() << ")\n";
  return 0;
}

struct DiagnoseArgs {
  std::string fit_path;
  std::string bounds_path;
  std::string out_path;
  int lambda_units = 2;
};

int run_diagnose(const DiagnoseArgs& args) {
  const pairfield::FitFile fit = pairfield::fit_from_json(load_json(args.fit_path));
  const pairfield::Bounds bounds = pairfield::bounds_from_json(load_json(args.bounds_path));

  const auto dob = pairfield::dobrushin_bound(fit.params.population, bounds.x_max);
  json out{{"dobrushin_value", dob.value},
           {"dobrushin_pass", dob.pass},
           {"notes",
            "lambda_min entries are spot checks over fitted unit fields, not a certificate; "
            "no pass threshold is defined for them"}};

  // Spot-check the autocorrelation eigenvalue on a few fitted unit fields;
  // quadrature when the dimension allows it, Monte-Carlo otherwise.
  pairfield::LambdaMinConfig lambda_cfg;
  if (fit.dims.p() > 3) {
    lambda_cfg.method = pairfield::LambdaMinConfig::Method::MonteCarlo;
    lambda_cfg.mc_samples = 4000;
  }
  json sweeps = json::array();
  const int units = std::min(args.lambda_units, fit.dims.n);
  for (int u = 0; u < units; ++u) {
    const int i = (fit.dims.n - 1) * u / std::max(1, units - 1);
    for (int t : {0, fit.dims.p() - 1}) {
      lambda_cfg.gibbs.seed = pairfield::derive_seed(0xD1A6u, {static_cast<std::uint64_t>(i),
                                                               static_cast<std::uint64_t>(t)});
      const auto lam = pairfield::lambda_min_check(fit.params.units.rows.row(i).transpose(),
                                                   fit.params.population, t, bounds.x_max,
                                                   lambda_cfg);
      sweeps.push_back(json{{"unit", i},
                            {"coordinate", t},
                            {"value", lam.value},
                            {"stderr", lam.stderr_estimate},
                            {"method", lam.method}});
      if (fit.dims.p() == 1) break;
    }
  }
  out["lambda_min"] = sweeps;
  pairfield::atomic_write_text(args.out_path, out.dump(2));
  std::cout << "diagnose: dobrushin " << dob.value << (dob.pass ? " (pass)" : " (fail)")
            << ", wrote " << args.out_path << "\n";
  return 0;
}

struct BenchArgs {
  std::string config_path;
  std::string out_path;
};

int run_bench(const BenchArgs& args) {
  json cfg_json = load_json(args.config_path);
  if (auto seed = env_seed_override()) cfg_json["master_seed"] = *seed;
  const pairfield::ExperimentConfig cfg = pairfield::experiment_config_from_json(cfg_json);
  const pairfield::ExperimentResult result = pairfield::run_study(cfg);

  pairfield::atomic_write_text(args.out_path, pairfield::results_to_csv(result));

  std::ostringstream agg;
  agg << "study,p,p_v,n,metric,mean,stderr,count\n";
  for (const auto& a : result.aggregates)
    agg << pairfield::study_name(result.study) << ',' << a.cell.p << ',' << a.cell.p_v << ','
        << a.cell.n << ',' << a.metric << ',' << pairfield::format_double(a.mean) << ','
        << pairfield::format_double(a.stderr_) << ',' << a.count << '\n';
  const fs::path out(args.out_path);
  const fs::path dir = out.parent_path().empty() ? fs::path(".") : out.parent_path();
  pairfield::atomic_write_text(dir / "aggregates.csv", agg.str());
  pairfield::atomic_write_text(
      dir / "provenance.json",
      pairfield::provenance_json(pairfield::experiment_config_to_json(cfg), cfg.master_seed)
          .dump(2));

  for (const auto& failure : result.failures)
    std::cerr << "cell (p=" << failure.cell.p << ", p_v=" << failure.cell.p_v
              << ", n=" << failure.cell.n << ", trial=" << failure.trial
              << ") failed: " << failure.message << "\n";
  std::cout << "bench: " << result.records.size() << " records, "
            << result.failures.size() << " failures, wrote " << args.out_path
            << ", aggregates.csv, provenance.json\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pairwise exponential-family estimation, counterfactuals, imputation"};
  app.require_subcommand(1);
  int workers = 0;
  app.add_option("--workers", workers, "worker threads (default 1 or PAIRFIELD_WORKERS)");

  SimulateArgs sim_args;
  auto* sim = app.add_subcommand("simulate", "generate a measurement-error study dataset");
  sim->add_option("--config", sim_args.config_path, "JSON config")->required();
  sim->add_option("--out-dir", sim_args.out_dir, "output directory")->required();

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "fit parameters from data");
  fit->add_option("--data", fit_args.data_path, "data.csv")->required();
  fit->add_option("--bounds", fit_args.bounds_path, "bounds.json with block sizes")->required();
  fit->add_option("--out", fit_args.out_path, "output fit.json")->required();
  fit->add_option("--config", fit_args.config_path, "optimizer config JSON");
  fit->add_option("--mode", fit_args.mode, "joint | shared | two-stage");
  fit->add_option("--support-halfwidth", fit_args.support_halfwidth,
                  "validation half-width for data entries");

  ImputeArgs impute_args;
  auto* impute = app.add_subcommand("impute", "measurement-error imputation pipeline");
  impute->add_option("--data", impute_args.data_path, "data.csv")->required();
  impute->add_option("--mask", impute_args.mask_path, "mask.csv (column 'clean', 0/1)")->required();
  impute->add_option("--bounds", impute_args.bounds_path, "bounds.json with block sizes")
      ->required();
  impute->add_option("--out-dir", impute_args.out_dir, "output directory")->required();
  impute->add_option("--truth", impute_args.truth_path, "truth.json for error metrics");
  impute->add_option("--config", impute_args.config_path, "pipeline config JSON");
  impute->add_flag("--support-box", impute_args.support_box,
                   "clamp coefficients to the latent covariate support");

  CounterfactualArgs cf_args;
  auto* cf = app.add_subcommand("counterfactual", "expected outcomes under interventions");
  cf->add_option("--fit", cf_args.fit_path, "fit.json")->required();
  cf->add_option("--data", cf_args.data_path, "data.csv")->required();
  cf->add_option("--alt", cf_args.alt_path, "alt.csv (n x p_a)")->required();
  cf->add_option("--out", cf_args.out_path, "output mu.csv")->required();
  cf->add_option("--delta-v", cf_args.delta_v_path,
                 "delta_v.csv; substitutes imputed covariates for the observed block");
  cf->add_option("--nodes", cf_args.nodes, "quadrature nodes per dimension");
  cf->add_option("--support-halfwidth", cf_args.support_halfwidth,
                 "validation half-width for data entries");

  DiagnoseArgs diag_args;
  auto* diag = app.add_subcommand("diagnose", "model assumption diagnostics");
  diag->add_option("--fit", diag_args.fit_path, "fit.json")->required();
  diag->add_option("--bounds", diag_args.bounds_path, "bounds.json")->required();
  diag->add_option("--out", diag_args.out_path, "output diagnostics.json")->required();
  diag->add_option("--lambda-units", diag_args.lambda_units, "units to spot-check");

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "run an error-scaling study");
  bench->add_option("--config", bench_args.config_path, "study config JSON")->required();
  bench->add_option("--out", bench_args.out_path, "output results.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (workers > 0) pairfield::set_worker_count(workers);

  try {
    if (*sim) return run_simulate(sim_args);
    if (*fit) return run_fit(fit_args);
    if (*impute) return run_impute(impute_args);
    if (*cf) return run_counterfactual(cf_args);
    if (*diag) return run_diagnose(diag_args);
    if (*bench) return run_bench(bench_args);
  } catch (const pairfield::NumericOverflow& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const pairfield::NumericUnderflow& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const pairfield::GenerationFailure& e) {
    std::cerr << "numeric failure: " << e.what() << " (best kappa " << e.best_kappa << ")\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
