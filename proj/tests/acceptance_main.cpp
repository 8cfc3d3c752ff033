// Acceptance suite: runs every end-to-end correctness criterion at its pinned
// tolerance and prints one pass/fail line per criterion. Exit status is the
// number of failed criteria. --cli <path> points at the command-line binary
// for the end-to-end determinism criterion.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "pairfield/pairfield.hpp"

using namespace pairfield;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

std::string cli_path;

// --------------------------------------------------------------------------
Outcome criterion_gradient_exactness() {
  Outcome out;
  Timer timer;
  Rng rng(101);
  const Bounds bounds{1.0, 2.0, 1.0};
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 1 + rep % 5;
    const int p = 2 + rep % 7;
    const Dims dims{p, 0, 0, n};
    const Dataset data =
        Dataset::make(oracles::random_dataset(n, p, bounds.x_max, rng), dims, bounds);
    const auto params = oracles::random_feasible(n, p, bounds, rng, 0.7);
    const LossGradient g = gradient(params, data);
    auto f = [&](const MatrixXd& fields, const MatrixXd& theta) {
      return oracles::naive_loss(fields, theta, data.X, bounds.x_max);
    };
    const auto fd = oracles::finite_difference_gradient(f, params.units.rows,
                                                        params.population.mat(), 1e-6);
    const double scale = std::max({fd.d_theta.cwiseAbs().maxCoeff(),
                                   fd.d_fields.cwiseAbs().maxCoeff(), 1e-12});
    worst = std::max(worst, (g.d_population - fd.d_theta).cwiseAbs().maxCoeff() / scale);
    worst = std::max(worst, (g.d_units - fd.d_fields).cwiseAbs().maxCoeff() / scale);
  }
  const double secs = timer.seconds();
  out.pass = worst < 1e-6 && secs < 5.0;
  std::ostringstream os;
  os << "max relative error " << worst << " over 20 instances in " << secs << " s";
  out.detail = os.str();
  return out;
}

// --------------------------------------------------------------------------
Outcome criterion_proper_loss() {
  Outcome out;
  Timer timer;
  const Bounds bounds{0.8, 1.5, 1.0};
  const Dims dims{1, 0, 1, 1};
  Rng rng(202);
  double worst_grad = 0.0, worst_gap = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const auto truth = oracles::random_feasible(1, 2, bounds, rng, 0.5);
    const auto probe =
        proper_loss_probe(truth, dims, bounds, 100, bounds.alpha / 2.0, 64, 500 + rep);
    worst_grad = std::max(worst_grad, probe.grad_norm);
    worst_gap = std::min(worst_gap, probe.min_gap);
  }
  const double secs = timer.seconds();
  out.pass = worst_grad < 1e-6 && worst_gap >= -1e-9 && secs < 30.0;
  std::ostringstream os;
  os << "max gradient norm " << worst_grad << ", min gap " << worst_gap << " in " << secs
     << " s";
  out.detail = os.str();
  return out;
}

// --------------------------------------------------------------------------
Outcome criterion_convexity_decomposition() {
  Outcome out;
  Rng rng(303);
  const Bounds bounds{1.0, 2.0, 1.0};
  const Dims dims{4, 0, 0, 4};
  const Dataset data =
      Dataset::make(oracles::random_dataset(4, 4, bounds.x_max, rng), dims, bounds);

  double worst_convexity = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto a = oracles::random_feasible(4, 4, bounds, rng);
    const auto b = oracles::random_feasible(4, 4, bounds, rng);
    const ExtendedParams mid(PopulationMatrix(0.5 * (a.population.mat() + b.population.mat())),
                             0.5 * (a.units.rows + b.units.rows));
    worst_convexity =
        std::max(worst_convexity, loss_value(mid, data) - 0.5 * (loss_value(a, data) +
                                                                 loss_value(b, data)));
  }

  double worst_identity = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 2 + rep % 4, p = 2 + rep % 5;
    const Dims d{p, 0, 0, n};
    const Dataset dat =
        Dataset::make(oracles::random_dataset(n, p, bounds.x_max, rng), d, bounds);
    const auto params = oracles::random_feasible(n, p, bounds, rng);
    const double value = loss_value(params, dat);
    double node_sum = 0.0;
    for (int t = 0; t < p; ++t) node_sum += loss_node(t, params, dat);
    double unit_sum = 0.0;
    for (int i = 0; i < n; ++i) unit_sum += loss_unit(i, params, dat);
    worst_identity = std::max(worst_identity, std::abs(node_sum - value) / value);
    worst_identity = std::max(worst_identity, std::abs(unit_sum / n - value) / value);
  }

  out.pass = worst_convexity <= 1e-10 && worst_identity <= 1e-12;
  std::ostringstream os;
  os << "max midpoint excess " << worst_convexity << ", max identity error " << worst_identity;
  out.detail = os.str();
  return out;
}

// --------------------------------------------------------------------------
Outcome criterion_projections() {
  Outcome out;
  Rng rng(404);
  const Bounds bounds{1.0, 2.0, 1.0};

  double worst_l1 = 0.0;
  for (int rep = 0; rep < 8; ++rep) {
    const int q = 2 + rep % 2;
    VectorXd v(q);
    for (int k = 0; k < q; ++k) v[k] = rng.uniform(-3.0, 3.0);
    const double radius = rng.uniform(0.3, 2.5);
    const VectorXd fast = project_l1_ball(v, radius);
    const VectorXd brute = oracles::l1_projection_scan(v, radius);
    worst_l1 = std::max(worst_l1, (fast - brute).cwiseAbs().maxCoeff());
  }

  double worst_pop = 0.0;
  double worst_idem = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    MatrixXd m(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m(i, j) = rng.uniform(-3.0, 3.0);
    worst_pop = std::max(worst_pop, (project_population(m, bounds, 2000).mat() -
                                     oracles::population_projection_exact(m, bounds))
                                        .norm());
    const MatrixXd once = project_population(m, bounds, 50).mat();
    worst_idem = std::max(
        worst_idem, (project_population(once, bounds, 50).mat() - once).cwiseAbs().maxCoeff());
    const MatrixXd clipped = project_unit_fields(m, bounds.alpha);
    worst_idem = std::max(
        worst_idem, (project_unit_fields(clipped, bounds.alpha) - clipped).cwiseAbs().maxCoeff());
    VectorXd v(3);
    for (int k = 0; k < 3; ++k) v[k] = rng.uniform(-3.0, 3.0);
    const VectorXd pv = project_l1_ball(v, 1.2);
    worst_idem = std::max(worst_idem, (project_l1_ball(pv, 1.2) - pv).cwiseAbs().maxCoeff());
  }

  const Dims dims{3, 0, 0, 8};
  const Dataset data =
      Dataset::make(oracles::random_dataset(8, 3, bounds.x_max, rng), dims, bounds);
  FitConfig cfg;
  cfg.max_iters = 150;
  const auto [params, report] = pgd_fit(data, bounds, cfg);

  out.pass = worst_l1 < 1e-4 && worst_pop < 1e-4 && worst_idem < 1e-12 && report.feasible;
  std::ostringstream os;
  os << "l1 oracle gap " << worst_l1 << ", population oracle gap " << worst_pop
     << ", idempotence gap " << worst_idem << ", iterates feasible "
     << (report.feasible ? "yes" : "no");
  out.detail = os.str();
  return out;
}

// --------------------------------------------------------------------------
Outcome criterion_sampler_moments() {
  Outcome out;
  Timer timer;

  JointParams params{VectorXd::Zero(3), MatrixXd::Zero(3, 3)};
  GibbsConfig cfg;
  cfg.burn_in = 10;
  cfg.thin = 1;
  cfg.seed = 505;
  const Dims dims{3, 0, 0, 100000};
  const Bounds bounds{1.0, 2.0, 1.0};
  const MatrixXd draws = gibbs_sample(params, 100000, dims, bounds, cfg);
  double worst_mean = 0.0, worst_var = 0.0;
  for (int t = 0; t < 3; ++t) {
    const double mean = draws.col(t).mean();
    const double var = (draws.col(t).array() - mean).square().mean();
    worst_mean = std::max(worst_mean, std::abs(mean));
    worst_var = std::max(worst_var, std::abs(var - 1.0 / 3.0) / (1.0 / 3.0));
  }

  // Sampler CDF table against the analytic law of the 1-D tilted density.
  const auto table = tilted_cdf_table(1.0, 0.0, 1.0, 512);
  const double z = std::exp(1.0) - std::exp(-1.0);
  auto analytic = [&](double x) { return (std::exp(x) - std::exp(-1.0)) / z; };
  double ks = 0.0;
  for (std::size_t j = 0; j < table.xs.size(); ++j)
    ks = std::max(ks, std::abs(table.cdf[j] - analytic(table.xs[j])));
  Rng rng(506);
  std::vector<double> sample(100000);
  for (auto& s : sample) s = table.inverse(rng.u01());
  const double ks_empirical = oracles::ks_statistic(sample, analytic);

  const double secs = timer.seconds();
  out.pass = worst_mean < 0.02 && worst_var < 0.05 && ks < 2e-3 && ks_empirical < 0.008 &&
             secs < 60.0;
  std::ostringstream os;
  os << "max |mean| " << worst_mean << ", max var error " << worst_var << ", table KS " << ks
     << ", empirical KS " << ks_empirical << " in " << secs << " s";
  out.detail = os.str();
  return out;
}

// --------------------------------------------------------------------------
Outcome criterion_counterfactual_mean() {
  Outcome out;
  double worst_closed = 0.0;
  for (double c : {0.5, 1.0, 2.0}) {
    OutcomeConditional cond{VectorXd::Constant(1, c), MatrixXd::Zero(1, 1), 1.0};
    const double expected = 1.0 / std::tanh(c) - 1.0 / c;
    worst_closed =
        std::max(worst_closed, std::abs(mean_outcome_quadrature(cond, 64)(0) - expected));
  }

  VectorXd psi(2);
  psi << 0.6, -0.4;
  MatrixXd Psi(2, 2);
  Psi << 0.2, 0.3, 0.3, -0.1;
  OutcomeConditional cond{psi, Psi, 1.0};
  GibbsConfig cfg;
  cfg.burn_in = 200;
  cfg.thin = 3;
  cfg.seed = 606;
  const auto [mean, se] = mean_outcome_gibbs(cond, cfg, 20000);
  const VectorXd exact = mean_outcome_quadrature(cond, 96);
  bool gibbs_ok = true;
  double worst_sigma = 0.0;
  for (int k = 0; k < 2; ++k) {
    const double sigmas = std::abs(mean(k) - exact(k)) / std::max(se(k), 1e-12);
    worst_sigma = std::max(worst_sigma, sigmas);
    gibbs_ok = gibbs_ok && sigmas < 3.0;
  }

  out.pass = worst_closed < 1e-8 && gibbs_ok;
  std::ostringstream os;
  os << "closed-form error " << worst_closed << ", Gibbs deviation " << worst_sigma
     << " standard errors";
  out.detail = os.str();
  return out;
}

// --------------------------------------------------------------------------
Outcome criterion_diagnostics() {
  Outcome out;
  const auto lam = lambda_min_check(VectorXd::Zero(1), PopulationMatrix::zero(1), 0, 1.0);
  const double lam_err = std::abs(lam.value - 4.0 / 45.0);

  Rng rng(707);
  double worst_dob = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    const auto params = oracles::random_feasible(1, 4, Bounds{1.0, 2.0, 1.0}, rng);
    const auto result = dobrushin_bound(params.population, 1.0);
    const double oracle = 2.0 * std::sqrt(2.0) *
                          oracles::power_iteration_opnorm(params.population.mat().cwiseAbs());
    worst_dob = std::max(worst_dob, std::abs(result.value - oracle));
  }
  const auto zero = dobrushin_bound(PopulationMatrix::zero(3), 1.0);

  out.pass = lam_err < 1e-6 && worst_dob < 1e-8 && zero.value == 0.0 && zero.pass;
  std::ostringstream os;
  os << "lambda_min error " << lam_err << ", dobrushin oracle gap " << worst_dob
     << ", zero case (" << zero.value << ", " << (zero.pass ? "pass" : "fail") << ")";
  out.detail = os.str();
  return out;
}

// --------------------------------------------------------------------------
ExperimentConfig scaling_config() {
  ExperimentConfig cfg;
  cfg.study = Study::ThetaMatrixVsN;
  cfg.trials = 5;
  cfg.bounds = Bounds{6.0, 4.0, 1.0};
  cfg.target_kappa = 0.15;
  cfg.fit.max_iters = 600;
  cfg.fit.tol_obj = 1e-9;
  cfg.gibbs.burn_in = 300;
  cfg.gibbs.thin = 5;
  cfg.master_seed = 20240801;
  return cfg;
}

Outcome criterion_error_scaling() {
  Outcome out;
  Timer timer;
  ExperimentConfig cfg = scaling_config();
  for (int n : {128, 256, 512, 1024, 2048}) cfg.grid.push_back({16, 4, n});
  const ExperimentResult result = run_study(cfg);

  std::vector<std::pair<double, double>> points;
  for (const auto& agg : result.aggregates)
    if (agg.metric == "theta_matrix_2inf") points.push_back({double(agg.cell.n), agg.mean});
  if (!result.failures.empty() || points.size() != 5) {
    out.pass = false;
    out.detail = "study failures: " + std::to_string(result.failures.size());
    return out;
  }
  const auto [slope, intercept] = fit_slope(points);
  const double secs = timer.seconds();
  out.pass = slope >= -0.70 && slope <= -0.25 && secs <= 900.0;
  std::ostringstream os;
  os << "log-log slope " << slope << " (window [-0.70, -0.25])";
  for (const auto& [n, err] : points) os << ", n=" << n << ": " << err;
  os << ", " << secs << " s";
  out.detail = os.str();
  return out;
}

// --------------------------------------------------------------------------
Outcome criterion_imputation_scaling() {
  Outcome out;
  Timer timer;
  const Bounds bounds{6.0, 4.0, 1.0};
  PipelineConfig pipeline;
  pipeline.fit.max_iters = 600;
  pipeline.fit.tol_obj = 1e-9;

  double envelope_lo = 1e300, envelope_hi = -1e300;
  auto mean_errors = [&](int p, bool track_envelope) {
    double mse_sum = 0.0, delta_sum = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
      SimStudyConfig sim;
      sim.target_kappa = 0.15;
      sim.gibbs.burn_in = 300;
      sim.gibbs.thin = 5;
      sim.seed = derive_seed(20240802, {static_cast<std::uint64_t>(p),
                                        static_cast<std::uint64_t>(trial)});
      auto [data, truth] = simulate_measurement_study(p, 4, 1024, bounds, sim);
      const ImputeResult result =
          impute_pipeline(data, truth.clean_mask, bounds, pipeline, &truth);
      mse_sum += result.metrics.field_max_mse;
      delta_sum += result.metrics.delta_v_max_sq_error;
      if (track_envelope) {
        for (int i = 0; i < data.n(); ++i)
          if (!truth.clean_mask[i]) {
            envelope_lo = std::min(envelope_lo, result.delta_v_hat.row(i).minCoeff());
            envelope_hi = std::max(envelope_hi, result.delta_v_hat.row(i).maxCoeff());
          }
      }
    }
    return std::pair<double, double>{mse_sum / 5.0, delta_sum / 5.0};
  };

  const auto [mse16, delta16] = mean_errors(16, false);
  const auto [mse64, delta64] = mean_errors(64, true);
  const double secs = timer.seconds();
  out.pass = mse64 < mse16 && delta64 < delta16 && secs <= 900.0;
  std::ostringstream os;
  os << "max-MSE " << mse16 << " -> " << mse64 << ", max |dv error|^2 " << delta16 << " -> "
     << delta64 << ", recovered dv in [" << envelope_lo << ", " << envelope_hi << "], " << secs
     << " s";
  out.detail = os.str();
  return out;
}

// --------------------------------------------------------------------------
int run_cli(const std::string& args) {
  const std::string cmd = cli_path + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  return read_text(a) == read_text(b);
}

Outcome criterion_end_to_end_determinism() {
  Outcome out;
  if (cli_path.empty()) {
    out.pass = false;
    out.detail = "no --cli path provided";
    return out;
  }
  const fs::path root = fs::temp_directory_path() / "pairfield_acceptance_e2e";
  fs::remove_all(root);

  const Bounds bounds{6.0, 4.0, 1.0};
  json sim_cfg{{"p", 8},      {"p_v", 2},           {"n", 32},
               {"alpha", 6.0}, {"beta", 4.0},        {"x_max", 1.0},
               {"seed", 321},  {"target_kappa", 0.05},
               {"gibbs", json{{"burn_in", 100}, {"thin", 2}, {"grid_nodes", 512}}}};
  json bounds_cfg = bounds_to_json(bounds);
  bounds_cfg.update(json{{"p_v", 2}, {"p_a", 3}, {"p_y", 3}});
  json study_cfg{{"study", "theta_matrix_vs_n"},
                 {"grid", json::array({json{{"p", 8}, {"p_v", 2}, {"n", 32}}})},
                 {"trials", 2},
                 {"bounds", bounds_to_json(bounds)},
                 {"fit", json{{"max_iters", 150}}},
                 {"gibbs", json{{"burn_in", 100}, {"thin", 2}}},
                 {"target_kappa", 0.02},
                 {"master_seed", 777}};

  auto run_chain = [&](const std::string& tag, int workers) -> bool {
    const fs::path dir = root / tag;
    fs::create_directories(dir);
    atomic_write_text(dir / "sim.json", sim_cfg.dump(2));
    atomic_write_text(dir / "bounds.json", bounds_cfg.dump(2));
    atomic_write_text(dir / "study.json", study_cfg.dump(2));
    const std::string w = " --workers " + std::to_string(workers) + " ";
    if (run_cli(w + "simulate --config " + (dir / "sim.json").string() + " --out-dir " +
                dir.string()) != 0)
      return false;
    if (run_cli(w + "fit --data " + (dir / "data.csv").string() + " --bounds " +
                (dir / "bounds.json").string() + " --out " + (dir / "fit_joint.json").string() +
                " --support-halfwidth 2.0") != 0)
      return false;
    // Mask: first half corrupted, second half clean (matches the generator).
    std::ostringstream mask;
    mask << "clean\n";
    for (int i = 0; i < 32; ++i) mask << (i < 16 ? 0 : 1) << "\n";
    atomic_write_text(dir / "mask.csv", mask.str());
    if (run_cli(w + "impute --data " + (dir / "data.csv").string() + " --mask " +
                (dir / "mask.csv").string() + " --bounds " + (dir / "bounds.json").string() +
                " --truth " + (dir / "truth.json").string() + " --out-dir " + dir.string()) != 0)
      return false;
    // Alternate interventions: negate the observed intervention block.
    const CsvMatrix data_csv = csv_to_matrix(read_text(dir / "data.csv"));
    const MatrixXd alt = -data_csv.values.middleCols(2, 3);
    atomic_write_text(dir / "alt.csv", matrix_to_csv(alt, numbered_header("a", 3)));
    if (run_cli(w + "counterfactual --fit " + (dir / "fit.json").string() + " --data " +
                (dir / "data.csv").string() + " --alt " + (dir / "alt.csv").string() +
                " --out " + (dir / "mu.csv").string()) != 0)
      return false;
    if (run_cli(w + "diagnose --fit " + (dir / "fit.json").string() + " --bounds " +
                (dir / "bounds.json").string() + " --out " +
                (dir / "diagnostics.json").string()) != 0)
      return false;
    if (run_cli(w + "bench --config " + (dir / "study.json").string() + " --out " +
                (dir / "results.csv").string()) != 0)
      return false;
    return true;
  };

  if (!run_chain("run1", 1) || !run_chain("run2", 1) || !run_chain("run8", 8)) {
    out.pass = false;
    out.detail = "a CLI stage exited nonzero";
    return out;
  }

  const std::vector<std::string> files{"data.csv",   "truth.json",      "fit_joint.json",
                                       "fit.json",   "delta_v.csv",     "metrics.json",
                                       "mu.csv",     "diagnostics.json", "results.csv",
                                       "aggregates.csv"};
  std::string mismatch;
  for (const auto& f : files) {
    if (!same_bytes(root / "run1" / f, root / "run2" / f)) mismatch += f + " (rerun) ";
    if (!same_bytes(root / "run1" / f, root / "run8" / f)) mismatch += f + " (workers) ";
  }
  out.pass = mismatch.empty();
  out.detail = mismatch.empty()
                   ? "all " + std::to_string(files.size()) + " outputs byte-identical across "
                     "reruns and worker counts 1/8"
                   : "mismatched: " + mismatch;
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  for (int k = 1; k + 1 < argc + 1; ++k) {
    if (std::string(argv[k]) == "--cli" && k + 1 < argc) cli_path = argv[k + 1];
  }

  struct Entry {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Entry> criteria{
      {"gradient exactness vs finite differences", criterion_gradient_exactness},
      {"proper idealized loss (stationary, unbeatable truth)", criterion_proper_loss},
      {"convexity probes and decomposition identities", criterion_convexity_decomposition},
      {"projection correctness and feasible iterates", criterion_projections},
      {"sampler moments and inverse-CDF accuracy", criterion_sampler_moments},
      {"counterfactual means vs closed form and Monte-Carlo", criterion_counterfactual_mean},
      {"diagnostics vs quadrature and power-iteration oracles", criterion_diagnostics},
      {"interaction-matrix error scaling with n", criterion_error_scaling},
      {"imputation error improves with dimension", criterion_imputation_scaling},
      {"end-to-end byte determinism", criterion_end_to_end_determinism},
  };

  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome outcome;
    try {
      outcome = criteria[k].run();
    } catch (const std::exception& e) {
      outcome.pass = false;
      outcome.detail = std::string("exception: ") + e.what();
    }
    if (!outcome.pass) ++failures;
    std::cout << (outcome.pass ? "[PASS]" : "[FAIL]") << " criterion " << (k + 1) << ": "
              << criteria[k].name << " -- " << outcome.detail << std::endl;
  }
  return failures;
}
