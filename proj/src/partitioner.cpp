#include "ddcpart/partitioner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "ddcpart/counts.hpp"
#include "ddcpart/error.hpp"
#include "split_search.hpp"

namespace ddcpart {

using detail::SplitSearch;

void Hyperparameters::validate() const {
  if (min_observations < 1) throw ArgumentError("min_observations must be >= 1");
  if (!(min_lift >= 0.0)) throw ArgumentError("min_lift must be >= 0");
  if (max_partitions < 1) throw ArgumentError("max_partitions must be >= 1");
  if (!(lambda_rel >= 0.0)) throw ArgumentError("lambda_rel must be >= 0");
  if (!(delta >= 0.0)) throw ArgumentError("delta must be >= 0");
}

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::MaxPartitions:
      return "max_partitions";
    case StopReason::MinLift:
      return "min_lift";
    case StopReason::NoGain:
      return "no_gain";
    case StopReason::NoCandidates:
      return "no_candidates";
  }
  return "unknown";
}

namespace {

// Threshold strictly above `lo` and at most `hi`, so lo goes left and hi
// goes right.
double midpoint(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid > lo ? mid : hi;
}

struct Best {
  bool found = false;
  SplitCandidate cand;
  double combined = 0.0;
  double dc = 0.0;
  double tr = 0.0;
};

// Higher gain first, then lowest dim, threshold and partition.
bool better(const Best& a, const Best& b) {
  if (!b.found) return a.found;
  if (!a.found) return false;
  if (a.combined != b.combined) return a.combined > b.combined;
  if (a.cand.dim != b.cand.dim) return a.cand.dim < b.cand.dim;
  if (a.cand.threshold != b.cand.threshold) return a.cand.threshold < b.cand.threshold;
  return a.cand.partition < b.cand.partition;
}

// Rows sorted by q[dim] ascending (ties by row), per dimension.
std::vector<std::vector<std::size_t>> sort_by_dim(const Panel& panel) {
  std::vector<std::vector<std::size_t>> order(panel.dims());
  for (int d = 0; d < panel.dims(); ++d) {
    auto& o = order[d];
    o.resize(panel.size());
    std::iota(o.begin(), o.end(), std::size_t{0});
    std::stable_sort(o.begin(), o.end(),
                     [&](std::size_t a, std::size_t b) { return panel.q(a, d) < panel.q(b, d); });
  }
  return order;
}

// Rows of one leaf in ascending order of q[dim], for every (leaf, dim).
using Buckets = std::vector<std::vector<std::vector<std::size_t>>>;  // [dim][leaf]

Buckets bucket(const std::vector<std::vector<std::size_t>>& order, const std::vector<int>& labels,
               int n_leaves) {
  Buckets b(order.size(), std::vector<std::vector<std::size_t>>(n_leaves));
  for (std::size_t d = 0; d < order.size(); ++d) {
    for (std::size_t r : order[d]) b[d][labels[r]].push_back(r);
  }
  return b;
}

// Sweeps the rows of `leaf` into label `scratch` from the top value down,
// scoring every boundary, then moves them back.
Best sweep(SplitSearch& engine, const Panel& panel, const std::vector<std::size_t>& rows, int leaf,
           int dim, int scratch, int min_obs, double lambda) {
  Best best;
  const std::size_t m = rows.size();
  if (m < 2 * static_cast<std::size_t>(min_obs)) return best;
  engine.reset_deltas();
  std::size_t i = m;
  while (i > 0) {
    --i;
    engine.move(rows[i], scratch);
    if (i == 0) break;
    const double hi = panel.q(rows[i], dim);
    const double lo = panel.q(rows[i - 1], dim);
    if (!(lo < hi)) continue;
    const std::size_t right = m - i;
    if (right < static_cast<std::size_t>(min_obs)) continue;
    if (i < static_cast<std::size_t>(min_obs)) break;
    Best here;
    here.found = true;
    here.cand = {leaf, dim, midpoint(lo, hi)};
    here.dc = engine.delta_dc();
    here.tr = engine.delta_tr();
    here.combined = here.dc + lambda * here.tr;
    if (better(here, best)) best = here;
  }
  for (std::size_t r = i; r < m; ++r) engine.move(rows[r], leaf);
  engine.reset_deltas();
  return best;
}

SplitGain gain_between(const ObjectiveValue& before, const ObjectiveValue& after) {
  return {after.f_dc - before.f_dc, after.f_tr - before.f_tr, after.combined - before.combined};
}

// Relative gain below this is treated as rounding noise.
constexpr double kNoiseFloor = 1e-9;

}  // namespace

std::vector<SplitCandidate> enumerate_candidates(const Discretization& disc, const Panel& panel,
                                                 const Hyperparameters& hp) {
  const auto labels = assign_rows(panel, disc);
  const auto order = sort_by_dim(panel);
  const auto buckets = bucket(order, labels, disc.n_partitions());
  const auto min_obs = static_cast<std::size_t>(hp.min_observations);
  std::vector<SplitCandidate> out;
  for (int p = 0; p < disc.n_partitions(); ++p) {
    for (int d = 0; d < panel.dims(); ++d) {
      const auto& rows = buckets[d][p];
      for (std::size_t i = 1; i < rows.size(); ++i) {
        const double lo = panel.q(rows[i - 1], d);
        const double hi = panel.q(rows[i], d);
        if (lo < hi && i >= min_obs && rows.size() - i >= min_obs) {
          out.push_back({p, d, midpoint(lo, hi)});
        }
      }
    }
  }
  return out;
}

SplitGain evaluate_split(const Panel& panel, const Discretization& disc,
                         const SplitCandidate& candidate, double lambda_rel, double lambda_adj) {
  if (lambda_rel < 0.0 || lambda_adj < 0.0) throw ArgumentError("objective weights must be >= 0");
  if (candidate.partition < 0 || candidate.partition >= disc.n_partitions() || candidate.dim < 0 ||
      candidate.dim >= panel.dims()) {
    throw ArgumentError("split candidate out of range");
  }
  const int k = disc.n_partitions();
  SplitSearch engine(panel, assign_rows(panel, disc), k + 1);
  for (std::size_t r = 0; r < panel.size(); ++r) {
    if (engine.label(r) == candidate.partition && panel.q(r, candidate.dim) >= candidate.threshold) {
      engine.move(r, k);
    }
  }
  SplitGain g;
  g.f_dc = engine.delta_dc();
  g.f_tr = engine.delta_tr();
  g.combined = g.f_dc + lambda_adj * lambda_rel * g.f_tr;
  return g;
}

double lambda_adj_or_zero(const Panel& panel) {
  try {
    return lambda_adj(count_tables(panel, Discretization(panel.dims())));
  } catch (const DegenerateDataError&) {
    return 0.0;
  }
}

DiscretizeResult discretize(const Panel& train, const Hyperparameters& hp,
                            const DiscretizeOptions& options) {
  hp.validate();
  if (train.size() == 0) throw ArgumentError("cannot discretize an empty panel");

  DiscretizeResult result;
  result.tree = Discretization(train.dims());
  const CountTables root_counts = count_tables(train, result.tree);
  try {
    result.lambda_adj = lambda_adj(root_counts);
  } catch (const DegenerateDataError&) {
    result.lambda_adj = 0.0;
    result.lambda_degenerate = true;
  }
  const double lambda = result.lambda_adj * hp.lambda_rel;
  result.root = objective(root_counts, hp.lambda_rel, result.lambda_adj);

  const int jobs = std::max(1, options.jobs);
  const int n_labels = hp.max_partitions;
  std::vector<SplitSearch> engines;
  engines.emplace_back(train, std::vector<int>(train.size(), 0), n_labels);
  for (int w = 1; w < jobs; ++w) engines.push_back(engines.front());

  const auto order = sort_by_dim(train);
  ObjectiveValue current = result.root;

  for (;;) {
    const int k = result.tree.n_partitions();
    if (k >= hp.max_partitions) {
      result.stop = StopReason::MaxPartitions;
      break;
    }
    const auto buckets = bucket(order, engines.front().labels(), k);

    // Work items are (leaf, dim) sweeps, handed out round-robin.
    std::vector<std::pair<int, int>> tasks;
    for (int p = 0; p < k; ++p) {
      for (int d = 0; d < train.dims(); ++d) tasks.emplace_back(p, d);
    }
    std::vector<Best> found(tasks.size());
    auto work = [&](int w) {
      for (std::size_t t = w; t < tasks.size(); t += jobs) {
        const auto [p, d] = tasks[t];
        found[t] = sweep(engines[w], train, buckets[d][p], p, d, k, hp.min_observations, lambda);
      }
    };
    if (jobs == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < jobs; ++w) pool.emplace_back(work, w);
      for (auto& th : pool) th.join();
    }
    Best best;
    for (const Best& b : found) {
      if (better(b, best)) best = b;
    }

    if (!best.found) {
      result.stop = StopReason::NoCandidates;
      break;
    }
    const double scale = std::abs(current.combined);
    if (best.combined <= kNoiseFloor * (1.0 + scale) || scale == 0.0) {
      result.stop = StopReason::NoGain;
      break;
    }
    if (best.combined / scale < hp.min_lift) {
      result.stop = StopReason::MinLift;
      break;
    }

    const SplitCandidate& c = best.cand;
    const int new_id = result.tree.split(c.partition, c.dim, c.threshold);
    for (auto& engine : engines) {
      for (std::size_t r : buckets[c.dim][c.partition]) {
        if (train.q(r, c.dim) >= c.threshold) engine.move(r, new_id);
      }
      engine.reset_deltas();
    }
    const ObjectiveValue after = objective(
        count_tables(train, engines.front().labels(), result.tree.n_partitions()), hp.lambda_rel,
        result.lambda_adj);
    TraceEntry entry;
    entry.split = c;
    entry.gain = {best.dc, best.tr, best.combined};
    entry.recomputed = gain_between(current, after);
    entry.after = after;
    result.trace.push_back(entry);
    current = after;
  }
  return result;
}

double score_discretization(const Panel& train, const Panel& validation,
                            const Discretization& disc, double lambda_rel, double delta) {
  const CountTables trn = count_tables(train, disc);
  const CountTables val = count_tables(validation, disc);
  return score(trn, val, lambda_rel, lambda_adj_or_zero(validation), SmoothingConfig{delta});
}

TuneResult tune(const Panel& train, const Panel& validation, const std::vector<Hyperparameters>& grid,
                const DiscretizeOptions& options) {
  if (grid.empty()) throw ArgumentError("tuning grid is empty");
  TuneResult out;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    Discretization tree = discretize(train, grid[i], options).tree;
    out.scores.push_back(
        score_discretization(train, validation, tree, grid[i].lambda_rel, grid[i].delta));
    out.trees.push_back(std::move(tree));
    if (i == 0 || out.scores[i] > out.scores[out.best]) out.best = i;
  }
  out.hyperparameters = grid[out.best];
  out.tree = out.trees[out.best];
  return out;
}

}  // namespace ddcpart
