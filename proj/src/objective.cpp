#include "ddcpart/objective.hpp"

#include <cmath>

#include "ddcpart/error.hpp"

namespace ddcpart {

double f_dc(const CountTables& counts) {
  double total = 0.0;
  counts.for_each_state_choice([&](int s, int, std::int64_t n) {
    if (n > 0) {
      total += static_cast<double>(n) *
               std::log(static_cast<double>(n) / static_cast<double>(counts.state(s)));
    }
  });
  return total;
}

double f_tr(const CountTables& counts) {
  double total = 0.0;
  counts.for_each_transition([&](int from, int j, int to, std::int64_t n) {
    if (n > 0) {
      const double denom =
          static_cast<double>(counts.state(to)) * static_cast<double>(counts.origin_choice(from, j));
      total += static_cast<double>(n) * std::log(static_cast<double>(n) / denom);
    }
  });
  return total;
}

double lambda_adj(const CountTables& root_counts) {
  const double tr = f_tr(root_counts);
  if (tr == 0.0) {
    throw DegenerateDataError("transition objective is zero at the root; use lambda = 0");
  }
  return std::abs(f_dc(root_counts) / tr);
}

ObjectiveValue objective(const CountTables& counts, double lambda_rel, double lambda_adj) {
  if (lambda_rel < 0.0 || lambda_adj < 0.0) throw ArgumentError("objective weights must be >= 0");
  ObjectiveValue v;
  v.f_dc = f_dc(counts);
  v.f_tr = f_tr(counts);
  v.lambda_adj = lambda_adj;
  v.lambda_rel = lambda_rel;
  v.combined = v.f_dc + lambda_adj * lambda_rel * v.f_tr;
  return v;
}

double score(const CountTables& train, const CountTables& validation, double lambda_rel,
             double lambda_adj_validation, const SmoothingConfig& smoothing) {
  if (!(train.space() == validation.space())) {
    throw ValidationError("score: training and validation counts use different state spaces");
  }
  if (smoothing.delta < 0.0) throw ArgumentError("smoothing delta must be >= 0");
  if (lambda_rel < 0.0) throw ArgumentError("lambda_rel must be >= 0");
  const double delta = smoothing.delta;
  const StateSpace& space = train.space();
  const double n_choices = space.n_choices;
  const double n_destinations = static_cast<double>(space.n_x) * space.n_partitions;

  bool zero_probability = false;
  double decision_part = 0.0;
  validation.for_each_state_choice([&](int s, int j, std::int64_t n_val) {
    if (n_val == 0) return;
    const double num = static_cast<double>(train.state_choice(s, j)) + delta;
    const double den = static_cast<double>(train.state(s)) + delta * n_choices;
    if (num <= 0.0) {
      zero_probability = true;
      return;
    }
    decision_part += static_cast<double>(n_val) * std::log(num / den);
  });

  double transition_part = 0.0;
  if (lambda_rel > 0.0) {
    // Per-cell lookup of the training transition count.
    std::unordered_map<std::uint64_t, std::int64_t> train_cells;
    const auto S = static_cast<std::uint64_t>(space.n_states());
    const auto J = static_cast<std::uint64_t>(space.n_choices);
    auto key = [&](int from, int j, int to) {
      return (static_cast<std::uint64_t>(to) * S + static_cast<std::uint64_t>(from)) * J +
             static_cast<std::uint64_t>(j);
    };
    train.for_each_transition(
        [&](int from, int j, int to, std::int64_t n) { train_cells[key(from, j, to)] = n; });

    validation.for_each_transition([&](int from, int j, int to, std::int64_t n_val) {
      if (n_val == 0) return;
      auto it = train_cells.find(key(from, j, to));
      const double cell = it == train_cells.end() ? 0.0 : static_cast<double>(it->second);
      const double num = cell + delta;
      const double den = static_cast<double>(train.origin_choice(from, j)) + delta * n_destinations;
      if (num <= 0.0) {
        zero_probability = true;
        return;
      }
      const double dest = std::max<double>(static_cast<double>(train.state(to)), 1.0);
      transition_part += static_cast<double>(n_val) * std::log(num / den / dest);
    });
  }

  if (zero_probability) return kZeroProbabilityScore;
  return (decision_part + lambda_rel * lambda_adj_validation * transition_part) / (1.0 + lambda_rel);
}

}  // namespace ddcpart
