#pragma once

#include <random>
#include <vector>

#include "ddcpart/panel.hpp"

namespace testutil {

inline ddcpart::Observation obs(std::int64_t agent, int period, int x, int d,
                                std::vector<double> q) {
  return {agent, period, x, std::move(q), d};
}

// Small random panel: integer q values in 0..levels-1, decisions and states
// loosely tied to q so splits have something to find.
inline ddcpart::Panel random_panel(std::uint64_t seed, int agents, int periods, int dims,
                                   int n_x = 3, int n_choices = 2, int levels = 4) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> level(0, levels - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ddcpart::Observation> rows;
  for (int a = 0; a < agents; ++a) {
    int x = 1 + static_cast<int>(u(rng) * n_x) % n_x;
    for (int t = 1; t <= periods; ++t) {
      std::vector<double> q(dims);
      for (auto& v : q) v = level(rng);
      const double bias = q[0] / levels;
      int d = u(rng) < 0.3 + 0.5 * bias ? 1 : 0;
      if (n_choices > 2 && u(rng) < 0.2) d = 2;
      rows.push_back(obs(a, t, x, d, q));
      x = u(rng) < 0.5 + 0.3 * bias ? 1 + (x % n_x) : x;
    }
  }
  return ddcpart::Panel(std::move(rows), {dims, n_choices, 1, n_x});
}

}  // namespace testutil
