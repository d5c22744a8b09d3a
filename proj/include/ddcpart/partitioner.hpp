#pragma once

#include <string>
#include <vector>

#include "ddcpart/discretization.hpp"
#include "ddcpart/objective.hpp"
#include "ddcpart/panel.hpp"

namespace ddcpart {

struct Hyperparameters {
  int min_observations = 1;  // per child
  double min_lift = 0.0;     // stop when gain / |F| falls below this
  int max_partitions = 16;
  double lambda_rel = 0.0;
  double delta = 1e-5;  // smoothing, used only when scoring

  // Throws ArgumentError when a field is out of range.
  void validate() const;
};

struct SplitCandidate {
  int partition = 0;
  int dim = 0;  // 0-based
  double threshold = 0.0;
  bool operator==(const SplitCandidate&) const = default;
};

// Change in each objective part caused by one split.
struct SplitGain {
  double f_dc = 0.0;
  double f_tr = 0.0;
  double combined = 0.0;  // f_dc + lambda_adj * lambda_rel * f_tr
};

// Thresholds sit at midpoints between consecutive distinct values of a
// dimension inside the leaf. Splits leaving fewer than min_observations rows
// on either side are dropped. Ordered by partition, dim, threshold.
std::vector<SplitCandidate> enumerate_candidates(const Discretization& disc, const Panel& panel,
                                                 const Hyperparameters& hp);

// Gain of applying `candidate` to `disc`, computed by relabelling only the
// rows of the split leaf.
SplitGain evaluate_split(const Panel& panel, const Discretization& disc,
                         const SplitCandidate& candidate, double lambda_rel, double lambda_adj);

enum class StopReason { MaxPartitions, MinLift, NoGain, NoCandidates };
std::string to_string(StopReason reason);

// One accepted split. `gain` comes from the incremental search and
// `recomputed` from full counts before and after, so the two can be compared.
struct TraceEntry {
  SplitCandidate split;
  SplitGain gain;
  SplitGain recomputed;
  ObjectiveValue after;
};

struct DiscretizeResult {
  Discretization tree;
  double lambda_adj = 0.0;
  bool lambda_degenerate = false;  // f_tr was zero at the root
  ObjectiveValue root;
  std::vector<TraceEntry> trace;
  StopReason stop = StopReason::NoCandidates;
};

struct DiscretizeOptions {
  int jobs = 1;  // worker threads for candidate evaluation
};

// Greedy recursive partitioning of the covariate space. lambda_adj is fixed
// at the root; when the root transition objective is zero it is set to 0.
// The tree grown with max_partitions = m is the first m-1 splits of any run
// with a larger budget, all else equal.
DiscretizeResult discretize(const Panel& train, const Hyperparameters& hp,
                            const DiscretizeOptions& options = {});

// lambda_adj on root-only counts, or 0 if the transition part is zero.
double lambda_adj_or_zero(const Panel& panel);

// Score of a discretization learnt on `train`, evaluated on `validation`.
double score_discretization(const Panel& train, const Panel& validation,
                            const Discretization& disc, double lambda_rel, double delta);

struct TuneResult {
  std::size_t best = 0;  // index into the grid
  Hyperparameters hyperparameters;
  Discretization tree;
  std::vector<double> scores;  // one per grid entry
  std::vector<Discretization> trees;
};

// Discretizes `train` for every grid entry, scores on `validation` and keeps
// the highest score (earliest entry on ties). Throws ArgumentError on an
// empty grid.
TuneResult tune(const Panel& train, const Panel& validation, const std::vector<Hyperparameters>& grid,
                const DiscretizeOptions& options = {});

}  // namespace ddcpart
