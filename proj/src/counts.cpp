#include "ddcpart/counts.hpp"

#include "ddcpart/error.hpp"

namespace ddcpart {

std::vector<int> assign_rows(const Panel& panel, const Discretization& disc) {
  if (panel.dims() != disc.dims()) {
    throw ValidationError("panel has " + std::to_string(panel.dims()) +
                          " covariates but the discretization expects " +
                          std::to_string(disc.dims()));
  }
  std::vector<int> labels(panel.size());
  for (std::size_t r = 0; r < panel.size(); ++r) labels[r] = disc.assign(panel.q(r));
  return labels;
}

CountTables count_tables(const Panel& panel, const Discretization& disc) {
  const auto labels = assign_rows(panel, disc);
  return count_tables(panel, labels, disc.n_partitions());
}

CountTables count_tables(const Panel& panel, std::span<const int> labels, int n_partitions) {
  if (labels.size() != panel.size()) throw ArgumentError("one label per row required");
  CountTables counts(StateSpace::of(panel.meta(), n_partitions));
  const StateSpace& space = counts.space();
  for (std::size_t r = 0; r < panel.size(); ++r) {
    const int s = space.index(panel.x(r), labels[r]);
    counts.add_observation(s, panel.decision(r));
    const std::size_t p = panel.prev(r);
    if (p != Panel::npos) {
      counts.add_transition(space.index(panel.x(p), labels[p]), panel.decision(p), s);
    }
  }
  return counts;
}

}  // namespace ddcpart
