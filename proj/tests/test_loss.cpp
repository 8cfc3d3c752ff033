#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "pairfield/pairfield.hpp"

using namespace pairfield;

namespace {

Dataset make_loss_data(int n, int p, const Bounds& bounds, Rng& rng) {
  Dims dims{p, 0, 0, n};
  return Dataset::make(oracles::random_dataset(n, p, bounds.x_max, rng), dims, bounds);
}

}  // namespace

TEST_CASE("loss value basics", "[loss]") {
  const Bounds bounds{1.0, 2.0, 1.0};
  Rng rng(3);

  SECTION("all parameters zero gives p") {
    const Dataset data = make_loss_data(2, 3, bounds, rng);
    CHECK(loss_value(ExtendedParams::zero(2, 3), data) == Catch::Approx(3.0).epsilon(1e-15));
  }

  SECTION("single-term plug-in") {
    Dims dims{1, 0, 0, 1};
    MatrixXd x(1, 1);
    x << 0.5;
    const Dataset data = Dataset::make(x, dims, bounds);
    MatrixXd field(1, 1);
    field << 1.0;
    ExtendedParams params(PopulationMatrix::zero(1), field);
    CHECK(loss_value(params, data) == Catch::Approx(std::exp(-0.5)).epsilon(1e-15));
  }

  SECTION("matches the term-by-term evaluator") {
    for (int rep = 0; rep < 10; ++rep) {
      const int n = 2 + (rep % 3), p = 2 + (rep % 4);
      const Dataset data = make_loss_data(n, p, bounds, rng);
      const auto params = oracles::random_feasible(n, p, bounds, rng);
      const double naive = oracles::naive_loss(params.units.rows, params.population.mat(),
                                               data.X, bounds.x_max);
      CHECK(loss_value(params, data) == Catch::Approx(naive).epsilon(1e-13));
    }
  }

  SECTION("positivity") {
    for (int rep = 0; rep < 20; ++rep) {
      const Dataset data = make_loss_data(3, 4, bounds, rng);
      const auto params = oracles::random_feasible(3, 4, bounds, rng);
      CHECK(loss_value(params, data) > 0.0);
    }
  }

  SECTION("shape mismatch") {
    const Dataset data = make_loss_data(2, 3, bounds, rng);
    CHECK_THROWS_AS(loss_value(ExtendedParams::zero(3, 3), data), InvalidArgument);
    CHECK_THROWS_AS(loss_value(ExtendedParams::zero(2, 2), data), InvalidArgument);
  }

  SECTION("clamp binding raises with the offending location") {
    Dims dims{2, 0, 0, 2};
    MatrixXd x = MatrixXd::Zero(2, 2);
    x(1, 0) = 1.0;
    const Bounds huge{2000.0, 4000.0, 1.0};
    const Dataset data = Dataset::make(x, dims, huge);
    MatrixXd field = MatrixXd::Zero(2, 2);
    field(1, 0) = 1500.0;
    ExtendedParams params(PopulationMatrix::zero(2), field);
    try {
      loss_value(params, data);
      FAIL("expected NumericOverflow");
    } catch (const NumericOverflow& e) {
      CHECK(e.unit == 1);
      CHECK(e.coord == 0);
    }
  }

  SECTION("bit-stable across worker counts") {
    Rng rng(53);
    const Dataset data = make_loss_data(700, 5, bounds, rng);
    const auto params = oracles::random_feasible(700, 5, bounds, rng);
    const double base = loss_value(params, data);
    const LossGradient g1 = gradient(params, data);
    set_worker_count(8);
    CHECK(loss_value(params, data) == base);
    const LossGradient g8 = gradient(params, data);
    set_worker_count(1);
    CHECK(g8.d_population == g1.d_population);
    CHECK(g8.d_units == g1.d_units);
  }
}

TEST_CASE("loss decompositions", "[loss]") {
  const Bounds bounds{1.0, 2.0, 1.0};
  Rng rng(17);

  SECTION("per-node values") {
    const Dataset uniform_data = make_loss_data(4, 3, bounds, rng);
    for (int t = 0; t < 3; ++t)
      CHECK(loss_node(t, ExtendedParams::zero(4, 3), uniform_data) ==
            Catch::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(loss_node(3, ExtendedParams::zero(4, 3), uniform_data), InvalidArgument);
    CHECK_THROWS_AS(loss_node(-1, ExtendedParams::zero(4, 3), uniform_data), InvalidArgument);
  }

  SECTION("node sum and unit average both recover the loss") {
    for (int rep = 0; rep < 10; ++rep) {
      const int n = 3 + rep % 3, p = 2 + rep % 3;
      const Dataset data = make_loss_data(n, p, bounds, rng);
      const auto params = oracles::random_feasible(n, p, bounds, rng);
      const double value = loss_value(params, data);

      double node_sum = 0.0;
      for (int t = 0; t < p; ++t) node_sum += loss_node(t, params, data);
      CHECK(node_sum == Catch::Approx(value).epsilon(1e-12));

      double unit_sum = 0.0;
      for (int i = 0; i < n; ++i) unit_sum += loss_unit(i, params, data);
      CHECK(unit_sum / n == Catch::Approx(value).epsilon(1e-12));
    }
  }

  SECTION("p = 1 degenerate cases") {
    const Dataset data = make_loss_data(2, 1, bounds, rng);
    const auto params = oracles::random_feasible(2, 1, bounds, rng);
    CHECK(loss_node(0, params, data) == Catch::Approx(loss_value(params, data)).epsilon(1e-15));

    VectorXd zero1 = VectorXd::Zero(1);
    VectorXd x1(1);
    x1 << 0.7;
    CHECK(loss_unit(zero1, PopulationMatrix::zero(1), x1, 1.0) == Catch::Approx(1.0));
  }

  SECTION("all unit rows equal reduces to the pooled i.i.d. objective") {
    const int n = 5, p = 3;
    const Dataset data = make_loss_data(n, p, bounds, rng);
    auto params = oracles::random_feasible(1, p, bounds, rng);
    MatrixXd tied = VectorXd::Ones(n) * params.units.rows.row(0);
    const ExtendedParams shared(params.population, tied);

    // Independent evaluation: p per-node sample-average losses with one field.
    const double c2 = bounds.x_max * bounds.x_max / 3.0;
    double iid = 0.0;
    for (int t = 0; t < p; ++t) {
      double node = 0.0;
      for (int i = 0; i < n; ++i) {
        double cross = 0.0;
        for (int u = 0; u < p; ++u)
          if (u != t) cross += params.population.mat()(t, u) * data.X(i, u);
        node += std::exp(-(params.units.rows(0, t) + 2.0 * cross) * data.X(i, t) -
                         params.population.mat()(t, t) * (data.X(i, t) * data.X(i, t) - c2));
      }
      iid += node / n;
    }
    CHECK(loss_value(shared, data) == Catch::Approx(iid).epsilon(1e-13));
  }
}

TEST_CASE("loss convexity probes", "[loss]") {
  const Bounds bounds{1.0, 2.0, 1.0};
  Rng rng(23);
  const Dataset data = make_loss_data(4, 3, bounds, rng);
  for (int rep = 0; rep < 100; ++rep) {
    const auto a = oracles::random_feasible(4, 3, bounds, rng);
    const auto b = oracles::random_feasible(4, 3, bounds, rng);
    const ExtendedParams mid(
        PopulationMatrix(0.5 * (a.population.mat() + b.population.mat())),
        0.5 * (a.units.rows + b.units.rows));
    CHECK(loss_value(mid, data) <=
          0.5 * (loss_value(a, data) + loss_value(b, data)) + 1e-10);
  }
}

TEST_CASE("analytic gradient", "[loss]") {
  const Bounds bounds{1.0, 2.0, 1.0};
  Rng rng(29);

  SECTION("zero-parameter plug-ins") {
    const int n = 2, p = 3;
    MatrixXd x = oracles::random_dataset(n, p, bounds.x_max, rng);
    x(0, 1) = 0.5;
    const Dataset data = Dataset::make(x, Dims{p, 0, 0, n}, bounds);
    const LossGradient g = gradient(ExtendedParams::zero(n, p), data);
    CHECK(g.d_units(0, 1) == Catch::Approx(-0.25).epsilon(1e-15));

    const double c2 = bounds.x_max * bounds.x_max / 3.0;
    for (int t = 0; t < p; ++t) {
      double expected = 0.0;
      for (int i = 0; i < n; ++i) expected += x(i, t) * x(i, t) - c2;
      expected *= -1.0 / n;
      CHECK(g.d_population(t, t) == Catch::Approx(expected).epsilon(1e-12));
    }
  }

  SECTION("agrees with central finite differences") {
    for (int rep = 0; rep < 8; ++rep) {
      const int n = 2 + rep % 4, p = 2 + rep % 5;
      const Dataset data = make_loss_data(n, p, bounds, rng);
      const auto params = oracles::random_feasible(n, p, bounds, rng, 0.7);
      const LossGradient g = gradient(params, data);
      auto f = [&](const MatrixXd& fields, const MatrixXd& theta) {
        return oracles::naive_loss(fields, theta, data.X, bounds.x_max);
      };
      const auto fd = oracles::finite_difference_gradient(f, params.units.rows,
                                                          params.population.mat(), 1e-6);
      const double scale = std::max(fd.d_theta.cwiseAbs().maxCoeff(),
                                    fd.d_fields.cwiseAbs().maxCoeff());
      CHECK((g.d_population - fd.d_theta).cwiseAbs().maxCoeff() / scale < 1e-6);
      CHECK((g.d_units - fd.d_fields).cwiseAbs().maxCoeff() / scale < 1e-6);
    }
  }

  SECTION("population block is exactly symmetric") {
    const Dataset data = make_loss_data(4, 5, bounds, rng);
    const auto params = oracles::random_feasible(4, 5, bounds, rng);
    const LossGradient g = gradient(params, data);
    CHECK((g.d_population - g.d_population.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("expected loss quadrature", "[loss]") {
  const Bounds bounds{0.8, 1.5, 1.0};
  const Dims dims{1, 0, 1, 1};

  SECTION("candidate = truth = zeros gives p") {
    const auto zero = ExtendedParams::zero(1, 2);
    CHECK(expected_loss_quadrature(zero, zero, dims, bounds, 64) ==
          Catch::Approx(2.0).epsilon(1e-12));
  }

  SECTION("dimension and node guards") {
    const Dims big{1, 1, 1, 1};
    const auto zero3 = ExtendedParams::zero(1, 3);
    CHECK_THROWS_AS(expected_loss_quadrature(zero3, zero3, big, bounds, 64),
                    UnsupportedDimension);
    const auto zero2 = ExtendedParams::zero(1, 2);
    CHECK_THROWS_AS(expected_loss_quadrature(zero2, zero2, dims, bounds, 4), InvalidArgument);
  }

  SECTION("any feasible candidate is no better than the truth") {
    Rng rng(31);
    const auto truth = oracles::random_feasible(1, 2, bounds, rng, 0.5);
    const double at_truth = expected_loss_quadrature(truth, truth, dims, bounds, 64);
    for (int rep = 0; rep < 50; ++rep) {
      const auto candidate = oracles::random_feasible(1, 2, bounds, rng);
      CHECK(expected_loss_quadrature(candidate, truth, dims, bounds, 64) >= at_truth - 1e-9);
    }
  }
}
