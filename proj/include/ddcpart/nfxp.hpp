#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddcpart/counts.hpp"
#include "ddcpart/error.hpp"
#include "ddcpart/optimizer.hpp"

namespace ddcpart {

// Sparse transition law g(to | from, j) over a discretized state space.
class TransitionTable {
 public:
  struct Entry {
    int to;
    double p;
  };

  TransitionTable() = default;
  explicit TransitionTable(StateSpace space);

  const StateSpace& space() const { return space_; }
  bool has_row(int from, int j) const { return present_[key(from, j)] != 0; }
  std::span<const Entry> row(int from, int j) const { return rows_[key(from, j)]; }
  double probability(int from, int j, int to) const;

  // Duplicate destinations are merged; entries are kept sorted by `to`.
  void set_row(int from, int j, std::vector<Entry> entries);

  // Every row present, nonnegative and summing to 1 within 1e-9. Throws
  // ValidationError otherwise.
  void validate() const;

 private:
  std::size_t key(int from, int j) const {
    return static_cast<std::size_t>(from) * space_.n_choices + j;
  }
  StateSpace space_;
  std::vector<std::vector<Entry>> rows_;
  std::vector<char> present_;
};

// Frequency estimate N(cell) / N(origin, j) for every observed origin.
TransitionTable estimate_transition(const CountTables& counts);

struct FilledRow {
  enum class Source { PooledOverX, PooledOverStates, Stay };
  int from;
  int choice;
  Source source;
};

// Completes the rows that were never observed so the Bellman operator is
// defined everywhere. A missing (x, pi, j) row borrows the transitions seen
// from (x', pi, j) for other x': under choice 0 the mileage change is applied
// relative to x (clamped to the X-range), under other choices the observed
// destination is reused. Without any such data the pool widens to every
// partition, and finally the state maps to itself. Returns the filled rows.
std::vector<FilledRow> fill_unobserved(TransitionTable& table, const CountTables& counts);

// Flow utility linear in the parameters: u(s, j) = features_j(s, :) * theta.
class UtilityModel {
 public:
  UtilityModel(StateSpace space, std::vector<Eigen::MatrixXd> features,
               std::vector<std::string> names);

  // Two choices. Keep: c_m * x. Replace: rc[pi], one cost per partition.
  static UtilityModel bus(const StateSpace& space);
  // Free utility for every (s, j >= 1); choice 0 normalized to zero.
  static UtilityModel nonparametric(const StateSpace& space);

  const StateSpace& space() const { return space_; }
  int n_params() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  const Eigen::MatrixXd& features(int j) const { return features_[j]; }

  // S x J table of flow utilities.
  Eigen::MatrixXd flow(const Eigen::VectorXd& theta) const;

 private:
  StateSpace space_;
  std::vector<Eigen::MatrixXd> features_;  // per choice, S x K
  std::vector<std::string> names_;
};

struct ValueFunction {
  Eigen::VectorXd v;  // V(s), indexed by state
  double beta = 0.0;
  int iterations = 0;
  double residual = 0.0;  // sup-norm of T V - V
};

// Fixed point of V = log sum_j exp(u_j + beta G_j V) by successive
// approximation, stopping once the sup-norm change drops below
// tolerance * (1 - beta) / beta. beta = 0 returns the closed form. Throws
// ArgumentError for beta outside [0, 1) and ValidationError when `g` is not
// a complete stochastic table.
ValueFunction value_iteration(const Eigen::MatrixXd& flow, const TransitionTable& g, double beta,
                              double tolerance = 1e-10, const Eigen::VectorXd* warm_start = nullptr,
                              int max_iterations = 1000000);

// v(s, j) = u(s, j) + beta sum_s' g(s' | s, j) V(s').
Eigen::MatrixXd choice_values(const Eigen::MatrixXd& flow, const TransitionTable& g,
                              const Eigen::VectorXd& v, double beta);

// Row-wise softmax of choice values.
Eigen::MatrixXd choice_probabilities(const Eigen::MatrixXd& values);
Eigen::MatrixXd choice_probabilities(const Eigen::MatrixXd& flow, const TransitionTable& g,
                                     const ValueFunction& v);

double bellman_residual(const Eigen::MatrixXd& flow, const TransitionTable& g,
                        const Eigen::VectorXd& v, double beta);

// Decision log-likelihood sum N(s, j) log p(j | s) for a fixed transition law,
// as a function of the utility parameters.
class Likelihood {
 public:
  Likelihood(UtilityModel model, TransitionTable g, const CountTables& counts, double beta,
             double tolerance = 1e-10);

  const UtilityModel& model() const { return model_; }
  double n_observations() const { return n_obs_; }

  // Log-likelihood; fills `grad` with the analytic gradient when non-null.
  double operator()(const Eigen::VectorXd& theta, Eigen::VectorXd* grad = nullptr);

  // d log p(j | s) / d theta for every (s, j): entry [j] is S x K.
  std::vector<Eigen::MatrixXd> score_table(const Eigen::VectorXd& theta);

  const ValueFunction& last_value_function() const { return last_; }

 private:
  void solve(const Eigen::VectorXd& theta);

  UtilityModel model_;
  TransitionTable g_;
  Eigen::MatrixXd counts_;  // S x J
  double n_obs_ = 0.0;
  double beta_;
  double tolerance_;
  ValueFunction last_;
  bool have_last_ = false;
  Eigen::MatrixXd probs_;
};

enum class ModelKind { Bus, Nonparametric };

struct EstimateOptions {
  double beta = 0.95;
  ModelKind model = ModelKind::Bus;
  double vi_tolerance = 1e-10;
  BfgsOptions bfgs;  // gradient tolerance applies to the mean log-likelihood
  int restarts = 3;
  double jitter = 0.5;
  std::uint64_t seed = 0;
  bool analytic_gradient = true;
  std::optional<Eigen::VectorXd> initial;  // defaults to zeros
};

struct ThetaEstimate {
  std::vector<std::string> names;
  Eigen::VectorXd theta;
  Eigen::VectorXd std_errors;  // outer product of per-agent scores; NaN if singular
  double loglik = 0.0;
  double gradient_norm = 0.0;
  long n_observations = 0;
  int iterations = 0;
  int restarts_converged = 0;
  bool converged = false;
  TransitionTable transitions;
  std::vector<FilledRow> filled_rows;
  std::vector<int> unvisited_states;

  double param(const std::string& name) const;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, ThetaEstimate best)
      : Error(what), best_(std::move(best)) {}
  const ThetaEstimate& best() const { return best_; }

 private:
  ThetaEstimate best_;
};

// Maximum likelihood on the discretized state space {X, Pi}: transitions by
// frequency, utilities by BFGS over the nested fixed point. Throws
// ConvergenceError (carrying the best attempt) when no restart converges.
ThetaEstimate estimate_theta(const Panel& panel, const Discretization& disc,
                             const EstimateOptions& options = {});

}  // namespace ddcpart
