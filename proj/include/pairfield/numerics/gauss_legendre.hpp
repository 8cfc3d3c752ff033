#pragma once

#include <cmath>
#include <vector>

#include "pairfield/core/errors.hpp"

namespace pairfield {

struct QuadratureRule {
  std::vector<double> nodes;    // on [-half_width, half_width]
  std::vector<double> weights;
};

/// Gauss-Legendre nodes and weights on [-half_width, half_width], computed by
/// Newton iteration on the Legendre recurrence. Exact for polynomials of
/// degree 2n-1.
inline QuadratureRule gauss_legendre(int n, double half_width) {
  if (n < 1) throw InvalidArgument("gauss_legendre: need at least one node");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double pi = 3.14159265358979323846264338327950288;
  for (int k = 0; k < (n + 1) / 2; ++k) {
    double x = std::cos(pi * (k + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      // Legendre recurrence for P_n(x) and its derivative.
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= n; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[k] = -x * half_width;
    rule.nodes[n - 1 - k] = x * half_width;
    rule.weights[k] = w * half_width;
    rule.weights[n - 1 - k] = w * half_width;
  }
  return rule;
}

}  // namespace pairfield
