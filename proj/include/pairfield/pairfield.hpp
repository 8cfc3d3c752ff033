#pragma once

// Learning heterogeneous pairwise exponential families: one shared symmetric
// interaction matrix, one external-field vector per unit, a single sample per
// unit. Fitting goes through a pooled partition-function-free convex loss and
// projected gradient descent; the fitted parameters drive unit-level
// counterfactual means and measurement-error imputation.

#include "pairfield/core/errors.hpp"
#include "pairfield/core/metrics.hpp"
#include "pairfield/core/types.hpp"
#include "pairfield/diagnostics.hpp"
#include "pairfield/harness.hpp"
#include "pairfield/imputation.hpp"
#include "pairfield/inference.hpp"
#include "pairfield/io.hpp"
#include "pairfield/loss.hpp"
#include "pairfield/numerics/gauss_legendre.hpp"
#include "pairfield/numerics/parallel.hpp"
#include "pairfield/numerics/rng.hpp"
#include "pairfield/numerics/summation.hpp"
#include "pairfield/optimizer.hpp"
#include "pairfield/sampler.hpp"
