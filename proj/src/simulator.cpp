#include "ddcpart/simulator.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace ddcpart {

std::string to_string(QTransition t) {
  switch (t) {
    case QTransition::None:
      return "none";
    case QTransition::Random:
      return "random";
    case QTransition::Sparse:
      return "sparse";
  }
  return "none";
}

QTransition parse_q_transition(const std::string& name) {
  if (name == "none") return QTransition::None;
  if (name == "random") return QTransition::Random;
  if (name == "sparse") return QTransition::Sparse;
  throw ArgumentError("unknown transition model '" + name + "' (expected none, random or sparse)");
}

void TruePartitionSpec::validate() const {
  const auto k = static_cast<std::size_t>(n_partitions());
  if (f_dc.size() != k || f_tr.size() != k || order.size() != k) {
    throw ValidationError("partition tables do not match the number of leaves");
  }
  for (int f : f_tr) {
    if (f < 0 || f > 3) throw ValidationError("mileage increments must lie in 0..3");
  }
  std::vector<int> sorted = order;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < k; ++i) {
    if (sorted[i] != static_cast<int>(i)) throw ValidationError("sparse order is not a permutation");
  }
  const auto d = static_cast<std::size_t>(tree.dims());
  if (lower.size() != d || upper.size() != d) throw ValidationError("support box has wrong dimension");
}

TruePartitionSpec sim1_truth(bool dissimilar_costs, bool dissimilar_transitions) {
  TruePartitionSpec spec;
  spec.tree = Discretization(10);
  spec.tree.split(0, 1, 5.0);  // 0: q2<5, 1: q2>=5
  spec.tree.split(0, 0, 5.0);  // 2: q1>=5, q2<5
  spec.tree.split(1, 0, 5.0);  // 3: q1>=5, q2>=5
  spec.f_dc = dissimilar_costs ? std::vector<double>{-7, -6, -5, -4} : std::vector<double>(4, -5.0);
  spec.f_tr = dissimilar_transitions ? std::vector<int>{0, 1, 2, 3} : std::vector<int>(4, 1);
  spec.order = {0, 1, 2, 3};
  spec.lower.assign(10, 0.0);
  spec.upper.assign(10, 10.0);
  spec.integer_support = true;
  return spec;
}

TruePartitionSpec random_discretization(std::uint64_t seed, int n_partitions, int relevant_dims,
                                        int total_dims, bool random_f_tr) {
  if (n_partitions < 1 || relevant_dims < 1 || total_dims < relevant_dims) {
    throw ArgumentError("invalid random discretization size");
  }
  std::mt19937_64 rng(seed);
  TruePartitionSpec spec;
  spec.tree = Discretization(total_dims);
  spec.lower.assign(total_dims, 0.0);
  spec.upper.assign(total_dims, 10.0);

  int failures = 0;
  while (spec.tree.n_partitions() < n_partitions) {
    const int k = spec.tree.n_partitions();
    std::vector<double> weight(k);
    for (int p = 0; p < k; ++p) {
      const double d = std::max(1, spec.tree.depth(p));
      weight[p] = 1.0 / (d * d);
    }
    std::discrete_distribution<int> pick_leaf(weight.begin(), weight.end());
    std::uniform_int_distribution<int> pick_dim(0, relevant_dims - 1);
    const int leaf = pick_leaf(rng);
    const int dim = pick_dim(rng);
    const auto box = spec.tree.leaf_box(leaf, spec.lower, spec.upper);
    const double mid = (box[dim].first + box[dim].second) / 2.0;
    if (!(mid > box[dim].first && mid < box[dim].second)) {
      if (++failures > 1000) throw Error("random discretization: too many failed split attempts");
      continue;
    }
    spec.tree.split(leaf, dim, mid);
  }

  const int k = spec.tree.n_partitions();
  std::uniform_int_distribution<int> pick_tr(0, 3);
  for (int p = 0; p < k; ++p) {
    const auto box = spec.tree.leaf_box(p, spec.lower, spec.upper);
    double sum = 0.0;
    for (int d = 0; d < relevant_dims; ++d) sum += box[d].first + box[d].second;
    spec.f_dc.push_back(5.0 - sum / 10.0);
    spec.f_tr.push_back(random_f_tr ? pick_tr(rng) : 1);
  }
  spec.order.resize(k);
  for (int p = 0; p < k; ++p) spec.order[p] = p;
  std::shuffle(spec.order.begin(), spec.order.end(), rng);
  return spec;
}

namespace {

StateSpace true_space(const DgpConfig& c) {
  return {c.x_min, c.x_max - c.x_min + 1, c.truth.n_partitions(), 2};
}

// Partition distribution one period ahead.
std::vector<std::pair<int, double>> partition_law(int current, const DgpConfig& c) {
  const int k = c.truth.n_partitions();
  switch (c.transition) {
    case QTransition::None:
      return {{current, 1.0}};
    case QTransition::Random: {
      std::vector<std::pair<int, double>> out;
      for (int p = 0; p < k; ++p) out.emplace_back(p, 1.0 / k);
      return out;
    }
    case QTransition::Sparse: {
      const auto& order = c.truth.order;
      const int pos = static_cast<int>(std::find(order.begin(), order.end(), current) - order.begin());
      std::vector<std::pair<int, double>> out;
      for (int step = 0; step <= c.sparse_steps; ++step) {
        out.emplace_back(order[(pos + step) % k], 1.0 / (c.sparse_steps + 1));
      }
      return out;
    }
  }
  return {};
}

int next_mileage(int x, int decision, int f_tr, int x_min, int x_max) {
  if (decision == 1) return std::max(f_tr, x_min);
  return x < x_max ? std::min(x + f_tr, x_max) : x;
}

}  // namespace

TransitionTable true_transition(const DgpConfig& config) {
  config.truth.validate();
  const StateSpace sp = true_space(config);
  TransitionTable g(sp);
  for (int s = 0; s < sp.n_states(); ++s) {
    const int x = sp.x_of(s);
    const int pi = sp.partition_of(s);
    const auto law = partition_law(pi, config);
    for (int j = 0; j < 2; ++j) {
      const int x1 = next_mileage(x, j, config.truth.f_tr[pi], config.x_min, config.x_max);
      std::vector<TransitionTable::Entry> entries;
      for (const auto& [p, w] : law) entries.push_back({sp.index(x1, p), w});
      g.set_row(s, j, std::move(entries));
    }
  }
  return g;
}

Eigen::MatrixXd true_ccp(const DgpConfig& config) {
  const TransitionTable g = true_transition(config);
  const UtilityModel model = UtilityModel::bus(g.space());
  Eigen::VectorXd theta(model.n_params());
  theta[0] = config.c_m;
  for (int p = 0; p < config.truth.n_partitions(); ++p) theta[1 + p] = config.truth.f_dc[p];
  const Eigen::MatrixXd flow = model.flow(theta);
  const ValueFunction v = value_iteration(flow, g, config.beta, 1e-12);
  return choice_probabilities(flow, g, v);
}

int next_partition(int current, const DgpConfig& config, std::mt19937_64& rng) {
  const int k = config.truth.n_partitions();
  switch (config.transition) {
    case QTransition::None:
      return current;
    case QTransition::Random:
      return std::uniform_int_distribution<int>(0, k - 1)(rng);
    case QTransition::Sparse: {
      const auto& order = config.truth.order;
      const int pos = static_cast<int>(std::find(order.begin(), order.end(), current) - order.begin());
      const int step = std::uniform_int_distribution<int>(0, config.sparse_steps)(rng);
      return order[(pos + step) % k];
    }
  }
  return current;
}

std::vector<double> draw_q(const TruePartitionSpec& spec, int partition, std::mt19937_64& rng) {
  const auto box = spec.tree.leaf_box(partition, spec.lower, spec.upper);
  std::vector<double> q(box.size());
  for (std::size_t d = 0; d < box.size(); ++d) {
    const auto [lo, hi] = box[d];
    if (spec.integer_support) {
      const auto a = static_cast<long>(std::ceil(lo));
      const auto b = static_cast<long>(std::ceil(hi)) - 1;
      q[d] = static_cast<double>(std::uniform_int_distribution<long>(a, b)(rng));
    } else {
      q[d] = std::uniform_real_distribution<double>(lo, hi)(rng);
    }
  }
  return q;
}

std::pair<int, std::vector<double>> transition_q(int current, const DgpConfig& config,
                                                 std::mt19937_64& rng) {
  const int p = next_partition(current, config, rng);
  return {p, draw_q(config.truth, p, rng)};
}

Panel simulate(const DgpConfig& config) {
  if (config.n_buses < 1 || config.n_periods < 1) throw ArgumentError("empty simulation");
  if (config.sparse_steps < 1) throw ArgumentError("sparse_steps must be >= 1");
  const Eigen::MatrixXd ccp = true_ccp(config);
  const StateSpace sp = true_space(config);
  const int k = config.truth.n_partitions();

  std::vector<Observation> obs;
  obs.reserve(static_cast<std::size_t>(config.n_buses) * config.n_periods);
  for (int bus = 0; bus < config.n_buses; ++bus) {
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed),
                      static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(bus)};
    std::mt19937_64 rng(seq);
    int pi = std::uniform_int_distribution<int>(0, k - 1)(rng);
    std::vector<double> q = draw_q(config.truth, pi, rng);
    int x = config.x_start;
    for (int t = 1; t <= config.n_periods; ++t) {
      const double p_replace = ccp(sp.index(x, pi), 1);
      const int d = std::bernoulli_distribution(p_replace)(rng) ? 1 : 0;
      obs.push_back({bus + 1, t, x, q, d});
      x = next_mileage(x, d, config.truth.f_tr[pi], config.x_min, config.x_max);
      std::tie(pi, q) = transition_q(pi, config, rng);
    }
  }
  PanelMeta meta{config.truth.tree.dims(), 2, config.x_min, config.x_max};
  return Panel(std::move(obs), meta);
}

int match_partitions(const TruePartitionSpec& truth, const Discretization& estimated,
                     const Panel& panel) {
  const int k_true = truth.n_partitions();
  const int k_est = estimated.n_partitions();
  std::vector<long> true_size(k_true, 0), est_size(k_est, 0);
  std::vector<int> est_of(k_true, -1);
  std::vector<char> consistent(k_true, 1);
  for (std::size_t r = 0; r < panel.size(); ++r) {
    const int t = truth.tree.assign(panel.q(r));
    const int e = estimated.assign(panel.q(r));
    ++true_size[t];
    ++est_size[e];
    if (est_of[t] < 0) {
      est_of[t] = e;
    } else if (est_of[t] != e) {
      consistent[t] = 0;
    }
  }
  int matched = 0;
  for (int t = 0; t < k_true; ++t) {
    if (true_size[t] > 0 && consistent[t] && est_size[est_of[t]] == true_size[t]) ++matched;
  }
  return matched;
}

std::string truth_json(const TruePartitionSpec& spec) {
  nlohmann::json j;
  j["partitions"] = spec.n_partitions();
  j["f_dc"] = spec.f_dc;
  j["f_tr"] = spec.f_tr;
  j["order"] = spec.order;
  j["lower"] = spec.lower;
  j["upper"] = spec.upper;
  j["integer_support"] = spec.integer_support;
  return j.dump(2) + "\n";
}

}  // namespace ddcpart
