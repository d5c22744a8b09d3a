#pragma once

// Incremental bookkeeping of the split objective. Holds the N(.) counts for
// the current per-row labels in dense (or hashed, for very large state
// spaces) arrays and updates f_dc and f_tr exactly when a single row changes
// label, touching only the terms that involve that row.

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "ddcpart/panel.hpp"

namespace ddcpart::detail {

class SplitSearch {
 public:
  // `labels` in 0..n_labels-1; n_labels leaves room for a scratch label.
  SplitSearch(const Panel& panel, std::vector<int> labels, int n_labels);

  // Relabels one row; accumulates the change in f_dc / f_tr.
  void move(std::size_t row, int new_label);

  double delta_dc() const { return delta_dc_; }
  double delta_tr() const { return delta_tr_; }
  void reset_deltas() {
    delta_dc_ = 0.0;
    delta_tr_ = 0.0;
  }

  int label(std::size_t row) const { return labels_[row]; }
  const std::vector<int>& labels() const { return labels_; }

 private:
  int state(std::size_t row) const { return x_index_[row] * n_labels_ + labels_[row]; }

  double g(std::int64_t n) const { return n_log_n_[static_cast<std::size_t>(n)]; }
  double lg(std::int64_t n) const { return log_[static_cast<std::size_t>(n)]; }

  void bump_state(int s, int by);
  void bump_incoming(int s, int by);
  void bump_decision(int s, int j, int by);
  void bump_origin(int s, int j, int by);
  void bump_cell(int to, int from, int j, int by);
  void detach(std::size_t row, int sign);

  const Panel& panel_;
  std::vector<int> labels_;
  std::vector<int> x_index_;
  int n_labels_;
  int n_choices_;
  int n_states_;

  std::vector<std::int32_t> state_, incoming_, decision_, origin_;
  bool dense_cells_ = true;
  std::vector<std::int32_t> cells_;
  std::unordered_map<std::uint64_t, std::int32_t> cell_map_;

  std::vector<double> n_log_n_, log_;
  double delta_dc_ = 0.0;
  double delta_tr_ = 0.0;
};

}  // namespace ddcpart::detail
