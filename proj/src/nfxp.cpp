#include "ddcpart/nfxp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

namespace ddcpart {

// ---------------------------------------------------------------- transitions

TransitionTable::TransitionTable(StateSpace space)
    : space_(space),
      rows_(static_cast<std::size_t>(space.n_states()) * space.n_choices),
      present_(rows_.size(), 0) {}

double TransitionTable::probability(int from, int j, int to) const {
  for (const Entry& e : row(from, j)) {
    if (e.to == to) return e.p;
  }
  return 0.0;
}

void TransitionTable::set_row(int from, int j, std::vector<Entry> entries) {
  if (from < 0 || from >= space_.n_states() || j < 0 || j >= space_.n_choices) {
    throw ArgumentError("transition row out of range");
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.to < b.to; });
  std::vector<Entry> merged;
  for (const Entry& e : entries) {
    if (e.to < 0 || e.to >= space_.n_states()) throw ArgumentError("transition target out of range");
    if (!merged.empty() && merged.back().to == e.to) {
      merged.back().p += e.p;
    } else {
      merged.push_back(e);
    }
  }
  rows_[key(from, j)] = std::move(merged);
  present_[key(from, j)] = 1;
}

void TransitionTable::validate() const {
  for (int s = 0; s < space_.n_states(); ++s) {
    for (int j = 0; j < space_.n_choices; ++j) {
      if (!has_row(s, j)) {
        throw ValidationError("transition row for state " + std::to_string(s) + ", choice " +
                              std::to_string(j) + " is missing");
      }
      double total = 0.0;
      for (const Entry& e : row(s, j)) {
        if (!(e.p >= 0.0)) throw ValidationError("negative transition probability");
        total += e.p;
      }
      if (std::abs(total - 1.0) > 1e-9) {
        throw ValidationError("transition row for state " + std::to_string(s) + ", choice " +
                              std::to_string(j) + " sums to " + std::to_string(total));
      }
    }
  }
}

TransitionTable estimate_transition(const CountTables& counts) {
  TransitionTable table(counts.space());
  std::map<std::pair<int, int>, std::vector<TransitionTable::Entry>> rows;
  counts.for_each_transition([&](int from, int j, int to, std::int64_t n) {
    rows[{from, j}].push_back(
        {to, static_cast<double>(n) / static_cast<double>(counts.origin_choice(from, j))});
  });
  for (auto& [k, entries] : rows) table.set_row(k.first, k.second, std::move(entries));
  return table;
}

std::vector<FilledRow> fill_unobserved(TransitionTable& table, const CountTables& counts) {
  const StateSpace& sp = table.space();
  const int S = sp.n_states();
  const int J = sp.n_choices;
  const int x_max = sp.x_min + sp.n_x - 1;

  std::vector<char> observed(static_cast<std::size_t>(S) * J, 0);
  for (int s = 0; s < S; ++s) {
    for (int j = 0; j < J; ++j) observed[s * J + j] = table.has_row(s, j);
  }

  auto borrow = [&](int from, int j, bool same_partition) {
    const int x = sp.x_of(from);
    const int pi = sp.partition_of(from);
    std::map<int, double> weight;
    for (int s0 = 0; s0 < S; ++s0) {
      if (!observed[s0 * J + j]) continue;
      if (same_partition && sp.partition_of(s0) != pi) continue;
      const double n0 = static_cast<double>(counts.origin_choice(s0, j));
      const int x0 = sp.x_of(s0);
      for (const auto& e : table.row(s0, j)) {
        int x1 = sp.x_of(e.to);
        if (j == 0) x1 = std::clamp(x + (x1 - x0), sp.x_min, x_max);
        weight[sp.index(x1, sp.partition_of(e.to))] += e.p * n0;
      }
    }
    std::vector<TransitionTable::Entry> entries;
    double total = 0.0;
    for (const auto& [to, w] : weight) total += w;
    for (const auto& [to, w] : weight) entries.push_back({to, w / total});
    return entries;
  };

  std::vector<FilledRow> filled;
  for (int s = 0; s < S; ++s) {
    for (int j = 0; j < J; ++j) {
      if (observed[s * J + j]) continue;
      auto entries = borrow(s, j, true);
      auto source = FilledRow::Source::PooledOverX;
      if (entries.empty()) {
        entries = borrow(s, j, false);
        source = FilledRow::Source::PooledOverStates;
      }
      if (entries.empty()) {
        entries = {{s, 1.0}};
        source = FilledRow::Source::Stay;
      }
      table.set_row(s, j, std::move(entries));
      filled.push_back({s, j, source});
    }
  }
  return filled;
}

// ---------------------------------------------------------------- utilities

UtilityModel::UtilityModel(StateSpace space, std::vector<Eigen::MatrixXd> features,
                           std::vector<std::string> names)
    : space_(space), features_(std::move(features)), names_(std::move(names)) {
  if (static_cast<int>(features_.size()) != space_.n_choices) {
    throw ArgumentError("one feature matrix per choice required");
  }
  for (const auto& f : features_) {
    if (f.rows() != space_.n_states() || f.cols() != n_params()) {
      throw ArgumentError("feature matrix has the wrong shape");
    }
  }
}

UtilityModel UtilityModel::bus(const StateSpace& space) {
  if (space.n_choices != 2) throw ArgumentError("the bus model has exactly two choices");
  const int S = space.n_states();
  const int K = 1 + space.n_partitions;
  std::vector<std::string> names{"c_m"};
  for (int p = 0; p < space.n_partitions; ++p) names.push_back("rc_" + std::to_string(p));
  Eigen::MatrixXd keep = Eigen::MatrixXd::Zero(S, K);
  Eigen::MatrixXd replace = Eigen::MatrixXd::Zero(S, K);
  for (int s = 0; s < S; ++s) {
    keep(s, 0) = space.x_of(s);
    replace(s, 1 + space.partition_of(s)) = 1.0;
  }
  return UtilityModel(space, {keep, replace}, names);
}

UtilityModel UtilityModel::nonparametric(const StateSpace& space) {
  const int S = space.n_states();
  const int J = space.n_choices;
  const int K = S * (J - 1);
  std::vector<std::string> names(K);
  std::vector<Eigen::MatrixXd> features(J, Eigen::MatrixXd::Zero(S, K));
  for (int j = 1; j < J; ++j) {
    for (int s = 0; s < S; ++s) {
      const int k = s * (J - 1) + (j - 1);
      features[j](s, k) = 1.0;
      names[k] = "u_x" + std::to_string(space.x_of(s)) + "_p" +
                 std::to_string(space.partition_of(s)) + "_j" + std::to_string(j);
    }
  }
  return UtilityModel(space, std::move(features), std::move(names));
}

Eigen::MatrixXd UtilityModel::flow(const Eigen::VectorXd& theta) const {
  if (theta.size() != n_params()) throw ArgumentError("parameter vector has the wrong length");
  Eigen::MatrixXd u(space_.n_states(), space_.n_choices);
  for (int j = 0; j < space_.n_choices; ++j) u.col(j) = features_[j] * theta;
  return u;
}

// ---------------------------------------------------------------- Bellman

namespace {

double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  const double m = row.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((row.array() - m).exp().sum());
}

Eigen::VectorXd expected_next(const TransitionTable& g, int j, const Eigen::VectorXd& v) {
  const int S = g.space().n_states();
  Eigen::VectorXd ev(S);
  for (int s = 0; s < S; ++s) {
    double acc = 0.0;
    for (const auto& e : g.row(s, j)) acc += e.p * v[e.to];
    ev[s] = acc;
  }
  return ev;
}

void check_shapes(const Eigen::MatrixXd& flow, const TransitionTable& g) {
  if (flow.rows() != g.space().n_states() || flow.cols() != g.space().n_choices) {
    throw ArgumentError("flow utilities do not match the transition state space");
  }
}

Eigen::VectorXd bellman(const Eigen::MatrixXd& flow, const TransitionTable& g,
                        const Eigen::VectorXd& v, double beta) {
  const Eigen::MatrixXd values = choice_values(flow, g, v, beta);
  Eigen::VectorXd out(values.rows());
  for (Eigen::Index s = 0; s < values.rows(); ++s) out[s] = log_sum_exp(values.row(s));
  return out;
}

ValueFunction iterate(const Eigen::MatrixXd& flow, const TransitionTable& g, double beta,
                      double tolerance, const Eigen::VectorXd* warm_start, int max_iterations) {
  const int S = g.space().n_states();
  ValueFunction out;
  out.beta = beta;
  if (beta == 0.0) {
    out.v = bellman(flow, g, Eigen::VectorXd::Zero(S), 0.0);
    out.iterations = 1;
    return out;
  }
  Eigen::VectorXd v = warm_start && warm_start->size() == S ? *warm_start : Eigen::VectorXd::Zero(S);
  const double stop = tolerance * (1.0 - beta) / beta;
  for (out.iterations = 1; out.iterations <= max_iterations; ++out.iterations) {
    Eigen::VectorXd next = bellman(flow, g, v, beta);
    const double change = (next - v).lpNorm<Eigen::Infinity>();
    v.swap(next);
    if (!(change >= stop)) break;  // also stops on NaN
  }
  out.v = std::move(v);
  out.residual = bellman_residual(flow, g, out.v, beta);
  return out;
}

}  // namespace

Eigen::MatrixXd choice_values(const Eigen::MatrixXd& flow, const TransitionTable& g,
                              const Eigen::VectorXd& v, double beta) {
  check_shapes(flow, g);
  Eigen::MatrixXd values = flow;
  if (beta != 0.0) {
    for (int j = 0; j < g.space().n_choices; ++j) values.col(j) += beta * expected_next(g, j, v);
  }
  return values;
}

Eigen::MatrixXd choice_probabilities(const Eigen::MatrixXd& values) {
  Eigen::MatrixXd p(values.rows(), values.cols());
  for (Eigen::Index s = 0; s < values.rows(); ++s) {
    const double m = values.row(s).maxCoeff();
    p.row(s) = (values.row(s).array() - m).exp();
    p.row(s) /= p.row(s).sum();
  }
  return p;
}

Eigen::MatrixXd choice_probabilities(const Eigen::MatrixXd& flow, const TransitionTable& g,
                                     const ValueFunction& v) {
  return choice_probabilities(choice_values(flow, g, v.v, v.beta));
}

double bellman_residual(const Eigen::MatrixXd& flow, const TransitionTable& g,
                        const Eigen::VectorXd& v, double beta) {
  return (bellman(flow, g, v, beta) - v).lpNorm<Eigen::Infinity>();
}

ValueFunction value_iteration(const Eigen::MatrixXd& flow, const TransitionTable& g, double beta,
                              double tolerance, const Eigen::VectorXd* warm_start,
                              int max_iterations) {
  if (!(beta >= 0.0 && beta < 1.0)) throw ArgumentError("beta must lie in [0, 1)");
  if (!(tolerance > 0.0)) throw ArgumentError("tolerance must be positive");
  check_shapes(flow, g);
  g.validate();
  return iterate(flow, g, beta, tolerance, warm_start, max_iterations);
}

// ---------------------------------------------------------------- likelihood

Likelihood::Likelihood(UtilityModel model, TransitionTable g, const CountTables& counts,
                       double beta, double tolerance)
    : model_(std::move(model)), g_(std::move(g)), beta_(beta), tolerance_(tolerance) {
  if (!(beta >= 0.0 && beta < 1.0)) throw ArgumentError("beta must lie in [0, 1)");
  if (!(counts.space() == g_.space()) || !(model_.space() == g_.space())) {
    throw ArgumentError("likelihood inputs use different state spaces");
  }
  g_.validate();
  const StateSpace& sp = g_.space();
  counts_ = Eigen::MatrixXd::Zero(sp.n_states(), sp.n_choices);
  counts.for_each_state_choice([&](int s, int j, std::int64_t n) {
    counts_(s, j) = static_cast<double>(n);
    n_obs_ += static_cast<double>(n);
  });
}

void Likelihood::solve(const Eigen::VectorXd& theta) {
  const Eigen::MatrixXd flow = model_.flow(theta);
  last_ = iterate(flow, g_, beta_, tolerance_, have_last_ ? &last_.v : nullptr, 1000000);
  if (!last_.v.allFinite()) {
    // A diverged warm start is useless next time.
    have_last_ = false;
  } else {
    have_last_ = true;
  }
  probs_ = choice_probabilities(choice_values(flow, g_, last_.v, beta_));
}

std::vector<Eigen::MatrixXd> Likelihood::score_table(const Eigen::VectorXd& theta) {
  solve(theta);
  const StateSpace& sp = g_.space();
  const int S = sp.n_states();
  const int J = sp.n_choices;
  const int K = model_.n_params();

  // dV = (I - beta sum_j P_j G_j)^-1 sum_j P_j Phi_j with P_j = diag(p_j).
  std::vector<Eigen::MatrixXd> dv(J);
  if (beta_ != 0.0) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(S, S);
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(S, K);
    for (int j = 0; j < J; ++j) {
      for (int s = 0; s < S; ++s) {
        const double p = probs_(s, j);
        for (const auto& e : g_.row(s, j)) A(s, e.to) -= beta_ * p * e.p;
      }
      B += probs_.col(j).asDiagonal() * model_.features(j);
    }
    const Eigen::MatrixXd dV = A.partialPivLu().solve(B);
    for (int j = 0; j < J; ++j) {
      Eigen::MatrixXd gdv(S, K);
      for (int s = 0; s < S; ++s) {
        gdv.row(s).setZero();
        for (const auto& e : g_.row(s, j)) gdv.row(s) += e.p * dV.row(e.to);
      }
      dv[j] = model_.features(j) + beta_ * gdv;
    }
  } else {
    for (int j = 0; j < J; ++j) dv[j] = model_.features(j);
  }

  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(S, K);
  for (int j = 0; j < J; ++j) mean += probs_.col(j).asDiagonal() * dv[j];
  for (int j = 0; j < J; ++j) dv[j] -= mean;
  return dv;
}

double Likelihood::operator()(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) {
  std::vector<Eigen::MatrixXd> dlogp;
  if (grad) {
    dlogp = score_table(theta);
  } else {
    solve(theta);
  }
  double ll = 0.0;
  for (Eigen::Index s = 0; s < counts_.rows(); ++s) {
    for (Eigen::Index j = 0; j < counts_.cols(); ++j) {
      const double n = counts_(s, j);
      if (n > 0.0) ll += n * std::log(probs_(s, j));
    }
  }
  if (grad) {
    grad->setZero(model_.n_params());
    for (Eigen::Index j = 0; j < counts_.cols(); ++j) {
      *grad += dlogp[j].transpose() * counts_.col(j);
    }
  }
  return ll;
}

// ---------------------------------------------------------------- estimation

double ThetaEstimate::param(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return theta[static_cast<Eigen::Index>(i)];
  }
  throw ArgumentError("no parameter named '" + name + "'");
}

ThetaEstimate estimate_theta(const Panel& panel, const Discretization& disc,
                             const EstimateOptions& options) {
  if (options.restarts < 1) throw ArgumentError("restarts must be >= 1");
  const std::vector<int> labels = assign_rows(panel, disc);
  const CountTables counts = count_tables(panel, labels, disc.n_partitions());
  const StateSpace& sp = counts.space();

  ThetaEstimate est;
  est.transitions = estimate_transition(counts);
  est.filled_rows = fill_unobserved(est.transitions, counts);
  for (int s = 0; s < sp.n_states(); ++s) {
    if (counts.state(s) == 0) est.unvisited_states.push_back(s);
  }
  est.n_observations = static_cast<long>(counts.n_decisions());

  UtilityModel model = options.model == ModelKind::Bus ? UtilityModel::bus(sp)
                                                       : UtilityModel::nonparametric(sp);
  est.names = model.names();
  Likelihood lik(std::move(model), est.transitions, counts, options.beta, options.vi_tolerance);
  const double n = std::max(1.0, lik.n_observations());
  const int K = lik.model().n_params();

  // Minimize the negative mean log-likelihood.
  ObjectiveFn f = [&](const Eigen::VectorXd& theta, Eigen::VectorXd* grad) {
    if (!grad) return -lik(theta) / n;
    if (options.analytic_gradient) {
      const double v = -lik(theta, grad) / n;
      *grad /= -n;
      return v;
    }
    *grad = numeric_gradient([&](const Eigen::VectorXd& t) { return -lik(t) / n; }, theta);
    return -lik(theta) / n;
  };

  Eigen::VectorXd start = options.initial.value_or(Eigen::VectorXd::Zero(K));
  if (start.size() != K) throw ArgumentError("initial parameter vector has the wrong length");
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> noise(0.0, options.jitter);

  BfgsResult best;
  bool have_best = false;
  bool best_converged = false;
  int total_iterations = 0;
  for (int r = 0; r < options.restarts; ++r) {
    Eigen::VectorXd x0 = start;
    if (r > 0) {
      for (Eigen::Index i = 0; i < K; ++i) x0[i] += noise(rng);
    }
    BfgsResult res = bfgs_minimize(f, x0, options.bfgs);
    total_iterations += res.iterations;
    if (!std::isfinite(res.value)) continue;
    if (res.converged) ++est.restarts_converged;
    const bool take = !have_best || (res.converged && !best_converged) ||
                      (res.converged == best_converged && res.value < best.value);
    if (take) {
      best = res;
      have_best = true;
      best_converged = res.converged;
    }
  }

  est.iterations = total_iterations;
  if (!have_best) {
    est.theta = start;
    est.loglik = -std::numeric_limits<double>::infinity();
    throw ConvergenceError("likelihood is not finite at any starting point", est);
  }
  est.theta = best.x;
  est.loglik = -best.value * n;
  est.gradient_norm = best.gradient.norm();
  est.converged = best_converged;

  // Standard errors from per-agent score sums.
  const std::vector<Eigen::MatrixXd> dlogp = lik.score_table(est.theta);
  Eigen::MatrixXd opg = Eigen::MatrixXd::Zero(K, K);
  for (const auto& a : panel.agents()) {
    Eigen::VectorXd s_i = Eigen::VectorXd::Zero(K);
    for (std::size_t r = a.begin; r < a.end; ++r) {
      const int s = sp.index(panel.x(r), labels[r]);
      s_i += dlogp[panel.decision(r)].row(s).transpose();
    }
    opg += s_i * s_i.transpose();
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(opg);
  if (lu.isInvertible()) {
    est.std_errors = lu.inverse().diagonal().cwiseMax(0.0).cwiseSqrt();
  } else {
    est.std_errors = Eigen::VectorXd::Constant(K, std::numeric_limits<double>::quiet_NaN());
  }

  if (!est.converged) {
    throw ConvergenceError("outer optimization did not reach the gradient tolerance after " +
                               std::to_string(total_iterations) + " iterations",
                           est);
  }
  return est;
}

}  // namespace ddcpart
