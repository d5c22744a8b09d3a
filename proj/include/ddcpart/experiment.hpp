#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ddcpart/error.hpp"
#include "ddcpart/nfxp.hpp"
#include "ddcpart/partitioner.hpp"
#include "ddcpart/simulator.hpp"

namespace ddcpart {

// Invalid configuration file. The message carries `file:line:column`.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct DgpSection {
  std::string truth = "sim1";  // "sim1" or "random"
  bool dissimilar_costs = false;
  bool dissimilar_transitions = false;
  int n_partitions = 15;  // random truth only
  int relevant_dims = 10;
  int total_dims = 30;
  bool random_mileage = false;
  QTransition transition = QTransition::None;
  int sparse_steps = 1;
  int n_buses = 400;
  int n_periods = 100;
  double c_m = -0.2;
  double beta = 0.95;

  // Truth for one round; the random generator draws a fresh tree per seed.
  TruePartitionSpec make_truth(std::uint64_t seed) const;
  DgpConfig make_config(TruePartitionSpec truth, std::uint64_t seed) const;
  std::string label() const;
};

// Input data for the single-step commands.
struct DataSection {
  std::string panel;       // training panel CSV
  std::string validation;  // optional validation CSV
  double validation_fraction = 0.2;  // used when `validation` is empty
  std::string tree;        // discretization file for `estimate`
  PanelSchema schema;
};

struct PartitionerSection {
  std::vector<int> budgets{4};       // partition budgets evaluated as prefixes
  std::vector<double> lambda_rel{1.0};
  int min_observations = 1;
  double min_lift = 1e-10;
  double delta = 1e-5;
  int jobs = 1;  // workers inside one discretization

  Hyperparameters hyperparameters(double lambda, int budget) const;
  int max_budget() const;
};

struct EstimatorSection {
  bool enabled = true;
  EstimateOptions options;
};

struct ValidationSection {
  std::string mode = "independent";  // "independent" or "split"
  double fraction = 0.2;
};

struct ReplicationSection {
  int rounds = 1;
  std::uint64_t seed = 0;
  int jobs = 1;
  int resamples = 1000;
  double band_low = 0.02;
  double band_high = 0.98;
};

struct OutputSection {
  std::string dir = "out";
  bool save_trees = true;
  bool save_panels = false;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::string source = "<memory>";
  DgpSection dgp;
  DataSection data;
  PartitionerSection partitioner;
  EstimatorSection estimator;
  ValidationSection validation;
  ReplicationSection replication;
  OutputSection output;
  bool has_dgp = false;
  bool has_data = false;
  bool has_estimator = false;

  // Parses YAML. Unknown keys, wrong types and out-of-range values raise
  // ConfigError pointing at the offending line. `beta` is required in both
  // the dgp and estimator sections when present.
  static ExperimentConfig parse(const std::string& text, const std::string& source = "<config>");
  static ExperimentConfig load(const std::string& path);

  // Fully resolved configuration, every default spelled out.
  std::string to_yaml() const;
};

// Independent stream seed for (base, round, stream).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t round, std::uint64_t stream);

// One (round, lambda_rel, budget) cell.
struct RoundRecord {
  int round = 0;
  std::uint64_t seed = 0;
  double lambda_rel = 0.0;
  int budget = 0;
  int n_partitions = 0;
  std::string stop;
  double score = 0.0;
  int matches = 0;
  int true_partitions = 0;
  bool estimated = false;
  bool converged = false;
  double loglik = 0.0;
  std::vector<std::string> names;
  std::vector<double> theta;
  std::vector<double> std_errors;
  // Replacement cost per true partition: the estimate of the leaf holding
  // most of that partition's rows. Bus model only.
  std::vector<double> cost_by_truth;
  std::string error;  // empty on success
  double seconds_discretize = 0.0;
  double seconds_estimate = 0.0;

  double param(const std::string& name) const;  // NaN when absent
};

struct RoundTiming {
  int round = 0;
  std::string phase;
  double seconds = 0.0;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::string label;  // row heading in reports
  std::vector<RoundRecord> records;  // ordered by round, lambda, budget
  std::vector<RoundTiming> timings;
  int failed_rounds = 0;
};

// Simulates, discretizes, scores and estimates every round. Rounds run on
// `replication.jobs` workers and are seeded independently, so the records do
// not depend on scheduling. A failing round is recorded and skipped.
ExperimentResult run_experiment(const ExperimentConfig& config);

// Writes rounds.csv, estimates.csv, timings.csv, aggregate.csv,
// aggregate.txt, run.json and config.yaml under config.output.dir.
void write_experiment(const ExperimentResult& result);

// Reads the per-round records back from an output directory.
ExperimentResult read_experiment(const std::string& dir);

// Mean with a percentile bootstrap band over round values.
struct Summary {
  long n = 0;
  double mean = 0.0;
  double low = 0.0;
  double high = 0.0;
};

Summary bootstrap_summary(const std::vector<double>& values, int resamples, double band_low,
                          double band_high, std::uint64_t seed);

// Aggregate cell: one metric for one (lambda_rel, budget) facet.
struct AggregateRow {
  double lambda_rel = 0.0;
  int budget = 0;
  std::string metric;
  Summary summary;
};

std::vector<AggregateRow> aggregate(const ExperimentResult& result);

// Aligned text tables: one block per metric with lambda_rel facets as rows
// and partition budgets as columns (or lambda_rel as columns when there is a
// single budget), each cell "mean (low, high)".
std::string emit_report(const std::vector<ExperimentResult>& results);

std::string aggregate_csv(const std::vector<AggregateRow>& rows);

}  // namespace ddcpart
