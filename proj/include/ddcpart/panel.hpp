#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ddcpart {

// One row of panel data: agent i in period t, in low-dimensional state x
// with high-dimensional covariates q, choosing `decision`.
struct Observation {
  std::int64_t agent_id = 0;
  int period = 0;  // 1-based
  int x = 0;
  std::vector<double> q;
  int decision = 0;
};

// Declared shape of a panel. The X-range and number of choices are part of
// the state space, so two panels compared against each other (train and
// validation) must agree on them.
struct PanelMeta {
  int dims = 0;       // D, length of q
  int n_choices = 0;  // J
  int x_min = 0;
  int x_max = 0;

  int n_x() const { return x_max - x_min + 1; }
  bool operator==(const PanelMeta&) const = default;
};

// Observations grouped by agent and sorted by period, stored column-wise.
// Immutable after construction.
class Panel {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  struct AgentSpan {
    std::int64_t agent_id;
    std::size_t begin;  // first row
    std::size_t end;    // one past last row
  };

  Panel() = default;

  // Sorts by (agent, period) and validates every invariant. Throws
  // ValidationError naming the offending agent on gaps or duplicates.
  Panel(std::vector<Observation> observations, PanelMeta meta);

  const PanelMeta& meta() const { return meta_; }
  std::size_t size() const { return x_.size(); }
  int dims() const { return meta_.dims; }
  std::size_t n_agents() const { return agents_.size(); }
  std::span<const AgentSpan> agents() const { return agents_; }

  std::int64_t agent_id(std::size_t row) const { return agent_[row]; }
  int period(std::size_t row) const { return period_[row]; }
  int x(std::size_t row) const { return x_[row]; }
  int decision(std::size_t row) const { return decision_[row]; }
  double q(std::size_t row, int dim) const { return q_[row * meta_.dims + dim]; }
  std::span<const double> q(std::size_t row) const {
    return {q_.data() + row * meta_.dims, static_cast<std::size_t>(meta_.dims)};
  }

  // Row of the same agent in the previous / next period, or npos.
  std::size_t prev(std::size_t row) const {
    return (row > 0 && agent_[row - 1] == agent_[row]) ? row - 1 : npos;
  }
  std::size_t next(std::size_t row) const {
    return (row + 1 < size() && agent_[row + 1] == agent_[row]) ? row + 1 : npos;
  }

  Observation observation(std::size_t row) const;

  // Panel containing only the listed agents (indices into agents()).
  Panel select_agents(std::span<const std::size_t> agent_indices) const;

  // Replaces the covariates with f(row) (which must return the new q row).
  // The new dimension is taken from the first returned row.
  template <typename F>
  Panel map_q(F&& f) const {
    std::vector<Observation> obs;
    obs.reserve(size());
    for (std::size_t r = 0; r < size(); ++r) {
      Observation o = observation(r);
      o.q = f(r);
      obs.push_back(std::move(o));
    }
    PanelMeta m = meta_;
    m.dims = obs.empty() ? m.dims : static_cast<int>(obs.front().q.size());
    return Panel(std::move(obs), m);
  }

 private:
  PanelMeta meta_;
  std::vector<std::int64_t> agent_;
  std::vector<int> period_;
  std::vector<int> x_;
  std::vector<int> decision_;
  std::vector<double> q_;
  std::vector<AgentSpan> agents_;
};

// Column mapping for delimited panel files. The q columns are
// `<q_prefix>1 .. <q_prefix>D`; D is discovered from the header.
struct PanelSchema {
  std::string agent = "agent";
  std::string period = "period";
  std::string x = "x";
  std::string decision = "d";
  std::string q_prefix = "q";
  char delimiter = ',';
  // When unset these are inferred from the data.
  std::optional<int> n_choices;
  std::optional<std::pair<int, int>> x_range;
};

Panel read_panel(std::istream& in, const PanelSchema& schema = {});
Panel load_panel(const std::string& path, const PanelSchema& schema = {});

// Writes `agent,period,x,d,q1..qD` with shortest round-trip formatting, so
// reading the file back yields the same doubles.
void write_panel(std::ostream& out, const Panel& panel);
void save_panel(const std::string& path, const Panel& panel);

// Assigns whole agents to train or validation. The validation side gets
// round(fraction * N) agents, clamped to [1, N-1].
std::pair<Panel, Panel> split_train_validation(const Panel& panel, double validation_fraction,
                                               std::uint64_t seed);

}  // namespace ddcpart
