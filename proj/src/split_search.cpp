#include "split_search.hpp"

#include <cmath>

namespace ddcpart::detail {

namespace {
// Above this many transition cells the counts go into a hash map.
constexpr std::uint64_t kMaxDenseCells = std::uint64_t{1} << 25;
}  // namespace

SplitSearch::SplitSearch(const Panel& panel, std::vector<int> labels, int n_labels)
    : panel_(panel),
      labels_(std::move(labels)),
      n_labels_(n_labels),
      n_choices_(panel.meta().n_choices),
      n_states_(panel.meta().n_x() * n_labels) {
  const std::size_t n = panel.size();
  x_index_.resize(n);
  for (std::size_t r = 0; r < n; ++r) x_index_[r] = panel.x(r) - panel.meta().x_min;

  n_log_n_.resize(n + 1);
  log_.resize(n + 1);
  n_log_n_[0] = 0.0;
  log_[0] = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    log_[k] = std::log(static_cast<double>(k));
    n_log_n_[k] = static_cast<double>(k) * log_[k];
  }

  const auto S = static_cast<std::uint64_t>(n_states_);
  state_.assign(S, 0);
  incoming_.assign(S, 0);
  decision_.assign(S * n_choices_, 0);
  origin_.assign(S * n_choices_, 0);
  const std::uint64_t n_cells = S * S * static_cast<std::uint64_t>(n_choices_);
  dense_cells_ = n_cells <= kMaxDenseCells;
  if (dense_cells_) cells_.assign(n_cells, 0);

  // Plain counting; the deltas are relative to this starting point.
  for (std::size_t r = 0; r < n; ++r) {
    const int s = state(r);
    ++state_[s];
    ++decision_[s * n_choices_ + panel.decision(r)];
    const std::size_t p = panel.prev(r);
    if (p != Panel::npos) {
      ++incoming_[s];
      ++origin_[state(p) * n_choices_ + panel.decision(p)];
      const std::uint64_t key =
          (static_cast<std::uint64_t>(s) * S + static_cast<std::uint64_t>(state(p))) * n_choices_ +
          panel.decision(p);
      if (dense_cells_) {
        ++cells_[key];
      } else {
        ++cell_map_[key];
      }
    }
  }
}

void SplitSearch::bump_state(int s, int by) {
  const std::int32_t old = state_[s];
  const std::int32_t now = old + by;
  delta_dc_ -= g(now) - g(old);
  if (incoming_[s] > 0) delta_tr_ -= incoming_[s] * (lg(now) - lg(old));
  state_[s] = now;
}

void SplitSearch::bump_incoming(int s, int by) {
  delta_tr_ -= by * lg(state_[s]);
  incoming_[s] += by;
}

void SplitSearch::bump_decision(int s, int j, int by) {
  std::int32_t& c = decision_[s * n_choices_ + j];
  delta_dc_ += g(c + by) - g(c);
  c += by;
}

void SplitSearch::bump_origin(int s, int j, int by) {
  std::int32_t& c = origin_[s * n_choices_ + j];
  delta_tr_ -= g(c + by) - g(c);
  c += by;
}

void SplitSearch::bump_cell(int to, int from, int j, int by) {
  const auto S = static_cast<std::uint64_t>(n_states_);
  const std::uint64_t key =
      (static_cast<std::uint64_t>(to) * S + static_cast<std::uint64_t>(from)) * n_choices_ + j;
  std::int32_t& c = dense_cells_ ? cells_[key] : cell_map_[key];
  delta_tr_ += g(c + by) - g(c);
  c += by;
}

// Removes (sign = -1) or adds (sign = +1) every count the row takes part
// in. The order keeps incoming(s) <= state(s) at every step.
void SplitSearch::detach(std::size_t row, int sign) {
  const int s = state(row);
  const int j = panel_.decision(row);
  const std::size_t p = panel_.prev(row);
  const std::size_t nx = panel_.next(row);
  if (sign < 0) {
    if (nx != Panel::npos) {
      bump_cell(state(nx), s, j, -1);
      bump_origin(s, j, -1);
    }
    if (p != Panel::npos) {
      bump_cell(s, state(p), panel_.decision(p), -1);
      bump_incoming(s, -1);
    }
    bump_decision(s, j, -1);
    bump_state(s, -1);
  } else {
    bump_state(s, +1);
    bump_decision(s, j, +1);
    if (p != Panel::npos) {
      bump_incoming(s, +1);
      bump_cell(s, state(p), panel_.decision(p), +1);
    }
    if (nx != Panel::npos) {
      bump_origin(s, j, +1);
      bump_cell(state(nx), s, j, +1);
    }
  }
}

void SplitSearch::move(std::size_t row, int new_label) {
  if (labels_[row] == new_label) return;
  detach(row, -1);
  labels_[row] = new_label;
  detach(row, +1);
}

}  // namespace ddcpart::detail
