#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "ddcpart/discretization.hpp"
#include "ddcpart/panel.hpp"

namespace ddcpart {

// Discretized state space {X, Pi}: state index s = (x - x_min) * k + pi.
struct StateSpace {
  int x_min = 0;
  int n_x = 0;
  int n_partitions = 1;
  int n_choices = 2;

  int n_states() const { return n_x * n_partitions; }
  int index(int x, int partition) const { return (x - x_min) * n_partitions + partition; }
  int x_of(int state) const { return x_min + state / n_partitions; }
  int partition_of(int state) const { return state % n_partitions; }
  bool operator==(const StateSpace&) const = default;

  static StateSpace of(const PanelMeta& meta, int n_partitions) {
    return {meta.x_min, meta.n_x(), n_partitions, meta.n_choices};
  }
};

// Occurrence counts N(.) for a fixed discretization, stored sparsely (an
// absent key means zero).
//
//   n_state(x, pi)                        all observations in (x, pi)
//   n_state_choice(x, pi, j)              ... that chose j
//   n_transition(x', pi', j -> x, pi)     moves (t-1 -> t) within an agent
//   n_origin_choice(x', pi', j)           observations in (x', pi') choosing
//                                         j that have a next period
//
// so each origin's transitions sum to its n_origin_choice.
class CountTables {
 public:
  CountTables() = default;
  explicit CountTables(StateSpace space) : space_(space) {}

  const StateSpace& space() const { return space_; }

  std::int64_t n_state(int x, int pi) const { return get(state_, space_.index(x, pi)); }
  std::int64_t n_state_choice(int x, int pi, int j) const {
    return get(state_choice_, choice_key(space_.index(x, pi), j));
  }
  std::int64_t n_origin_choice(int x_from, int pi_from, int j) const {
    return get(origin_choice_, choice_key(space_.index(x_from, pi_from), j));
  }
  std::int64_t n_transition(int x_from, int pi_from, int j, int x_to, int pi_to) const {
    return get(transition_,
               transition_key(space_.index(x_to, pi_to), space_.index(x_from, pi_from), j));
  }

  // State-index accessors.
  std::int64_t state(int s) const { return get(state_, s); }
  std::int64_t state_choice(int s, int j) const { return get(state_choice_, choice_key(s, j)); }
  std::int64_t origin_choice(int s, int j) const { return get(origin_choice_, choice_key(s, j)); }

  std::int64_t n_decisions() const { return n_decisions_; }
  std::int64_t n_transitions() const { return n_transitions_; }

  // Visit every nonzero cell.
  template <typename F>  // f(state, count)
  void for_each_state(F&& f) const {
    for (const auto& [k, n] : state_) f(static_cast<int>(k), n);
  }
  template <typename F>  // f(state, choice, count)
  void for_each_state_choice(F&& f) const {
    for (const auto& [k, n] : state_choice_) f(state_of_choice(k), choice_of(k), n);
  }
  template <typename F>  // f(origin state, choice, count)
  void for_each_origin_choice(F&& f) const {
    for (const auto& [k, n] : origin_choice_) f(state_of_choice(k), choice_of(k), n);
  }
  template <typename F>  // f(origin state, choice, destination state, count)
  void for_each_transition(F&& f) const {
    const std::uint64_t s = static_cast<std::uint64_t>(space_.n_states());
    const std::uint64_t J = static_cast<std::uint64_t>(space_.n_choices);
    for (const auto& [k, n] : transition_) {
      const auto j = static_cast<int>(k % J);
      const std::uint64_t pair = k / J;
      f(static_cast<int>(pair % s), j, static_cast<int>(pair / s), n);
    }
  }

  void add_observation(int s, int j) {
    ++state_[static_cast<std::uint64_t>(s)];
    ++state_choice_[choice_key(s, j)];
    ++n_decisions_;
  }
  void add_transition(int from, int j, int to) {
    ++origin_choice_[choice_key(from, j)];
    ++transition_[transition_key(to, from, j)];
    ++n_transitions_;
  }

 private:
  using Map = std::unordered_map<std::uint64_t, std::int64_t>;

  static std::int64_t get(const Map& m, std::uint64_t key) {
    auto it = m.find(key);
    return it == m.end() ? 0 : it->second;
  }
  std::uint64_t choice_key(int s, int j) const {
    return static_cast<std::uint64_t>(s) * static_cast<std::uint64_t>(space_.n_choices) +
           static_cast<std::uint64_t>(j);
  }
  int state_of_choice(std::uint64_t k) const {
    return static_cast<int>(k / static_cast<std::uint64_t>(space_.n_choices));
  }
  int choice_of(std::uint64_t k) const {
    return static_cast<int>(k % static_cast<std::uint64_t>(space_.n_choices));
  }
  std::uint64_t transition_key(int to, int from, int j) const {
    const auto s = static_cast<std::uint64_t>(space_.n_states());
    return (static_cast<std::uint64_t>(to) * s + static_cast<std::uint64_t>(from)) *
               static_cast<std::uint64_t>(space_.n_choices) +
           static_cast<std::uint64_t>(j);
  }

  StateSpace space_;
  Map state_, state_choice_, transition_, origin_choice_;
  std::int64_t n_decisions_ = 0;
  std::int64_t n_transitions_ = 0;
};

// Partition id of every row.
std::vector<int> assign_rows(const Panel& panel, const Discretization& disc);

CountTables count_tables(const Panel& panel, const Discretization& disc);

// Counts from precomputed per-row partition labels in 0..n_partitions-1.
CountTables count_tables(const Panel& panel, std::span<const int> labels, int n_partitions);

}  // namespace ddcpart
