#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "oracles.hpp"
#include "pairfield/pairfield.hpp"

using namespace pairfield;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "pairfield_io_test";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("double text round trip is exact", "[io]") {
  Rng rng(3);
  for (int k = 0; k < 200; ++k) {
    const double v = (rng.u01() - 0.5) * std::pow(10.0, rng.uniform(-12.0, 12.0));
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(parse_double("0.1") == 0.1);
  CHECK_THROWS_AS(parse_double("not-a-number"), InvalidArgument);
  CHECK_THROWS_AS(parse_double("1.5x"), InvalidArgument);
}

TEST_CASE("csv matrices round trip bitwise", "[io]") {
  Rng rng(5);
  MatrixXd m(4, 3);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = rng.uniform(-2.0, 2.0);
  const std::string text = matrix_to_csv(m, numbered_header("x", 3));
  const CsvMatrix back = csv_to_matrix(text);
  CHECK(back.header == std::vector<std::string>{"x1", "x2", "x3"});
  CHECK(back.values == m);
  CHECK_THROWS_AS(csv_to_matrix("a,b\n1\n"), InvalidArgument);
  CHECK_THROWS_AS(csv_to_matrix(""), InvalidArgument);
}

TEST_CASE("dataset csv uses the x1..xp header", "[io]") {
  const Bounds bounds{1.0, 2.0, 1.0};
  const Dims dims{1, 1, 1, 2};
  Rng rng(7);
  const Dataset data =
      Dataset::make(oracles::random_dataset(2, 3, bounds.x_max, rng), dims, bounds);
  const fs::path path = temp_dir() / "data.csv";
  write_dataset_csv(path, data);
  const CsvMatrix back = csv_to_matrix(read_text(path));
  CHECK(back.header == std::vector<std::string>{"x1", "x2", "x3"});
  CHECK(back.values == data.X);
  CHECK_FALSE(fs::exists(path.string() + ".tmp"));
}

TEST_CASE("fit json round trips the identical parameters", "[io]") {
  const Bounds bounds{1.5, 2.5, 1.0};
  const Dims dims{2, 1, 1, 3};
  Rng rng(9);
  const auto params = oracles::random_feasible(3, 4, bounds, rng);
  const json j = fit_to_json(params, dims, bounds);
  const std::string dumped = j.dump();
  const FitFile back = fit_from_json(json::parse(dumped));
  CHECK(back.params.population.mat() == params.population.mat());
  CHECK(back.params.units.rows == params.units.rows);
  CHECK(back.bounds.alpha == bounds.alpha);
  CHECK(back.dims.p_v == dims.p_v);

  // A second dump of the parsed object is byte identical.
  CHECK(fit_to_json(back.params, back.dims, back.bounds).dump() == dumped);
}

TEST_CASE("sim truth json round trip", "[io]") {
  const Bounds bounds{6.0, 4.0, 1.0};
  SimStudyConfig cfg;
  cfg.seed = 13;
  cfg.target_kappa = 0.02;
  cfg.gibbs.burn_in = 30;
  cfg.gibbs.thin = 1;
  auto [data, truth] = simulate_measurement_study(6, 2, 16, bounds, cfg);
  const json j = sim_truth_to_json(truth, data.dims, bounds);
  const SimTruth back = sim_truth_from_json(json::parse(j.dump()));
  CHECK(back.joint.phi == truth.joint.phi);
  CHECK(back.joint.Phi == truth.joint.Phi);
  CHECK(back.delta_v == truth.delta_v);
  CHECK(back.clean_mask == truth.clean_mask);
  CHECK(back.kappa == truth.kappa);
}

TEST_CASE("config json round trips", "[io]") {
  FitConfig fit;
  fit.max_iters = 123;
  fit.step_init = 0.5;
  fit.tol_grad = 1e-9;
  fit.seed = 42;
  const FitConfig fit_back = fit_config_from_json(fit_config_to_json(fit));
  CHECK(fit_back.max_iters == 123);
  CHECK(fit_back.step_init == 0.5);
  CHECK(fit_back.tol_grad == 1e-9);
  CHECK(fit_back.seed == 42);

  GibbsConfig gibbs;
  gibbs.burn_in = 77;
  gibbs.grid_nodes = 128;
  const GibbsConfig gibbs_back = gibbs_config_from_json(gibbs_config_to_json(gibbs));
  CHECK(gibbs_back.burn_in == 77);
  CHECK(gibbs_back.grid_nodes == 128);

  CHECK_THROWS_AS(fit_config_from_json(json{{"max_iters", 0}}), InvalidArgument);
  CHECK_THROWS_AS(gibbs_config_from_json(json{{"grid_nodes", 8}}), InvalidArgument);
}

TEST_CASE("atomic writes replace without temp residue", "[io]") {
  const fs::path path = temp_dir() / "atomic.txt";
  atomic_write_text(path, "first");
  atomic_write_text(path, "second");
  CHECK(read_text(path) == "second");
  CHECK_FALSE(fs::exists(path.string() + ".tmp"));
}

TEST_CASE("bounds json validation", "[io]") {
  CHECK_THROWS_AS(bounds_from_json(json{{"alpha", -1.0}, {"beta", 1.0}, {"x_max", 1.0}}),
                  InvalidArgument);
  const Bounds b = bounds_from_json(json{{"alpha", 2.0}, {"beta", 3.0}, {"x_max", 1.5}});
  CHECK(b.alpha == 2.0);
  CHECK(b.x_max == 1.5);
}
