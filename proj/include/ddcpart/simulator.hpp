#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddcpart/discretization.hpp"
#include "ddcpart/nfxp.hpp"
#include "ddcpart/panel.hpp"

namespace ddcpart {

// How the true partition evolves from one period to the next.
enum class QTransition { None, Random, Sparse };
std::string to_string(QTransition t);
QTransition parse_q_transition(const std::string& name);  // "none", "random", "sparse"

// The data-generating partition of the covariate space together with its
// per-partition replacement utility and mileage increment.
struct TruePartitionSpec {
  Discretization tree;
  std::vector<double> f_dc;  // replacement utility per partition id
  std::vector<int> f_tr;     // mileage increment per partition id, in 0..3
  std::vector<int> order;    // sequence of partition ids followed by sparse moves
  std::vector<double> lower, upper;  // support box [lower, upper) per dimension
  bool integer_support = false;      // q takes the integers inside the box

  int n_partitions() const { return tree.n_partitions(); }
  void validate() const;
};

// Four quadrants of (q1, q2) split at 5 over ten integer covariates in 0..9.
// Partition ids follow the quadrant numbering: 0 = (q1<5, q2<5),
// 1 = (q1<5, q2>=5), 2 = (q1>=5, q2<5), 3 = (q1>=5, q2>=5).
TruePartitionSpec sim1_truth(bool dissimilar_costs, bool dissimilar_transitions);

// Random tree over [0, 10)^total_dims. Each round picks a leaf with
// probability proportional to 1 / depth^2 (the root counts as depth 1) and
// halves it along a random relevant dimension. Costs are
// 5 - sum over relevant dims of (lo + hi) / 10. Mileage increments are all 1,
// or uniform on {0,1,2,3} when `random_f_tr`. The sparse order is a random
// permutation.
TruePartitionSpec random_discretization(std::uint64_t seed, int n_partitions = 15,
                                        int relevant_dims = 10, int total_dims = 30,
                                        bool random_f_tr = false);

struct DgpConfig {
  TruePartitionSpec truth;
  QTransition transition = QTransition::None;
  int sparse_steps = 1;  // sparse moves stay or advance 1..sparse_steps, uniformly
  int n_buses = 400;
  int n_periods = 100;
  double c_m = -0.2;
  double beta = 0.95;
  int x_min = 1;  // replacement resets mileage to max(f_tr, x_min)
  int x_max = 20;
  int x_start = 1;
  std::uint64_t seed = 0;
};

// Exact transition law of the bus problem over {x_min..x_max} x partitions.
TransitionTable true_transition(const DgpConfig& config);

// p(replace | x, pi) under the true model, as an S x 2 table.
Eigen::MatrixXd true_ccp(const DgpConfig& config);

// Next partition under the transition model.
int next_partition(int current, const DgpConfig& config, std::mt19937_64& rng);

// Uniform draw of q inside the box of `partition`.
std::vector<double> draw_q(const TruePartitionSpec& spec, int partition, std::mt19937_64& rng);

// Moves to the next partition and draws a fresh q inside it.
std::pair<int, std::vector<double>> transition_q(int current, const DgpConfig& config,
                                                 std::mt19937_64& rng);

// Forward simulation; each bus uses its own stream seeded by (seed, bus).
Panel simulate(const DgpConfig& config);

// Number of true partitions whose set of panel rows equals the set of rows
// of some estimated leaf.
int match_partitions(const TruePartitionSpec& truth, const Discretization& estimated,
                     const Panel& panel);

// Sidecar with the per-partition tables, as JSON.
std::string truth_json(const TruePartitionSpec& spec);

}  // namespace ddcpart
