#pragma once

#include <limits>

#include "ddcpart/counts.hpp"

namespace ddcpart {

// F = f_dc + lambda_adj * lambda_rel * f_tr, all parts nonpositive.
struct ObjectiveValue {
  double f_dc = 0.0;
  double f_tr = 0.0;
  double lambda_adj = 0.0;
  double lambda_rel = 0.0;
  double combined = 0.0;
};

// Pseudo-count added to every possible outcome when scoring out of sample.
struct SmoothingConfig {
  double delta = 1e-5;
};

// Returned by `score` when delta == 0 and the validation data contains an
// event the training data gives zero probability.
inline constexpr double kZeroProbabilityScore = -std::numeric_limits<double>::infinity();

// Sum over (x, pi, j) of N(x,pi,j) log(N(x,pi,j) / N(x,pi)), with 0 log 0 = 0.
double f_dc(const CountTables& counts);

// Sum over transition cells of N(x,pi,x',pi',j) log(N(x,pi,x',pi',j) /
// (N(x,pi) N(x',pi',j))), where (x', pi', j) is the origin.
double f_tr(const CountTables& counts);

// |f_dc / f_tr| on root-only counts. Throws DegenerateDataError when the
// transition part is zero (it then carries no information and the caller
// should use lambda = 0).
double lambda_adj(const CountTables& root_counts);

// Throws ArgumentError on negative weights.
ObjectiveValue objective(const CountTables& counts, double lambda_rel, double lambda_adj);

// Out-of-sample score: validation counts weight log-probabilities learnt on
// the training counts, normalized by 1 / (1 + lambda_rel). Trained
// probabilities are additively smoothed:
//   choice      (N(x,pi,j) + d) / (N(x,pi) + d J)
//   transition  (N(cell) + d) / (N(x',pi',j) + d |X| k)  /  max(N(x,pi), 1)
// Both tables must share the same state space (same discretization).
double score(const CountTables& train, const CountTables& validation, double lambda_rel,
             double lambda_adj_validation, const SmoothingConfig& smoothing = {});

}  // namespace ddcpart
