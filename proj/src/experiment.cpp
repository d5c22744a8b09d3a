#include "ddcpart/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "json.hpp"

namespace fs = std::filesystem;

namespace ddcpart {

namespace {

// ---------------------------------------------------------------------------
// YAML reading with positions in every message.

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Mark& m, const std::string& msg) const {
    if (m.is_null()) throw ConfigError(source_ + ": " + msg);
    throw ConfigError(fmt::format("{}:{}:{}: {}", source_, m.line + 1, m.column + 1, msg));
  }
  [[noreturn]] void fail(const YAML::Node& n, const std::string& msg) const { fail(n.Mark(), msg); }

  void expect_map(const YAML::Node& n, const std::string& what) const {
    if (!n.IsMap()) fail(n, what + " must be a mapping");
  }

  void check_keys(const YAML::Node& map, const std::string& section,
                  std::initializer_list<const char*> allowed) const {
    for (const auto& kv : map) {
      const std::string key = kv.first.as<std::string>();
      bool ok = false;
      for (const char* a : allowed) ok = ok || key == a;
      if (!ok) {
        std::string list;
        for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
        fail(kv.first, fmt::format("unknown key '{}' in {} (expected one of: {})", key, section, list));
      }
    }
  }

  template <typename T>
  T as(const YAML::Node& n, const std::string& key) const {
    if (!n.IsScalar()) fail(n, fmt::format("'{}' must be a scalar", key));
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      fail(n, fmt::format("'{}' has an invalid value '{}'", key, n.Scalar()));
    }
  }

  template <typename T>
  void read(const YAML::Node& map, const char* key, T& out) const {
    if (const YAML::Node n = map[key]) out = as<T>(n, key);
  }

  template <typename T>
  void require(const YAML::Node& map, const char* key, T& out, const std::string& section) const {
    const YAML::Node n = map[key];
    if (!n) fail(map, fmt::format("missing required key '{}' in {}", key, section));
    out = as<T>(n, key);
  }

  // A scalar or a sequence of scalars.
  template <typename T>
  void read_list(const YAML::Node& map, const char* key, std::vector<T>& out) const {
    const YAML::Node n = map[key];
    if (!n) return;
    out.clear();
    if (n.IsScalar()) {
      out.push_back(as<T>(n, key));
    } else if (n.IsSequence()) {
      for (const auto& e : n) out.push_back(as<T>(e, key));
    } else {
      fail(n, fmt::format("'{}' must be a value or a list", key));
    }
    if (out.empty()) fail(n, fmt::format("'{}' must not be empty", key));
  }

  void check(bool ok, const YAML::Node& map, const char* key, const std::string& msg) const {
    if (ok) return;
    const YAML::Node n = map[key];
    fail(n ? n.Mark() : map.Mark(), fmt::format("'{}' {}", key, msg));
  }

  const std::string& source() const { return source_; }

 private:
  std::string source_;
};

std::string resolve_path(const std::string& base_dir, const std::string& p) {
  if (p.empty() || base_dir.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base_dir) / p).lexically_normal().string();
}

void parse_dgp(const Reader& r, const YAML::Node& n, DgpSection& d) {
  r.expect_map(n, "dgp");
  r.check_keys(n, "dgp",
               {"truth", "dissimilar_costs", "dissimilar_transitions", "partitions",
                "relevant_dims", "total_dims", "random_mileage", "transition", "sparse_steps",
                "buses", "periods", "c_m", "beta"});
  r.read(n, "truth", d.truth);
  r.check(d.truth == "sim1" || d.truth == "random", n, "truth", "must be 'sim1' or 'random'");
  r.read(n, "dissimilar_costs", d.dissimilar_costs);
  r.read(n, "dissimilar_transitions", d.dissimilar_transitions);
  r.read(n, "partitions", d.n_partitions);
  r.read(n, "relevant_dims", d.relevant_dims);
  r.read(n, "total_dims", d.total_dims);
  r.read(n, "random_mileage", d.random_mileage);
  if (const YAML::Node t = n["transition"]) {
    try {
      d.transition = parse_q_transition(r.as<std::string>(t, "transition"));
    } catch (const ArgumentError& e) {
      r.fail(t, e.what());
    }
  }
  r.read(n, "sparse_steps", d.sparse_steps);
  r.read(n, "buses", d.n_buses);
  r.read(n, "periods", d.n_periods);
  r.read(n, "c_m", d.c_m);
  r.require(n, "beta", d.beta, "dgp");
  r.check(d.beta >= 0.0 && d.beta < 1.0, n, "beta", "must lie in [0, 1)");
  r.check(d.n_buses >= 1, n, "buses", "must be >= 1");
  r.check(d.n_periods >= 1, n, "periods", "must be >= 1");
  r.check(d.sparse_steps >= 1, n, "sparse_steps", "must be >= 1");
  r.check(d.n_partitions >= 1, n, "partitions", "must be >= 1");
  r.check(d.relevant_dims >= 1, n, "relevant_dims", "must be >= 1");
  r.check(d.total_dims >= d.relevant_dims, n, "total_dims", "must be >= relevant_dims");
}

void parse_data(const Reader& r, const YAML::Node& n, DataSection& d, const std::string& base) {
  r.expect_map(n, "data");
  r.check_keys(n, "data",
               {"panel", "validation", "validation_fraction", "tree", "columns", "delimiter",
                "choices", "x_range"});
  auto path = [&](const char* key, std::string& out) {
    if (const YAML::Node p = n[key]) {
      out = resolve_path(base, r.as<std::string>(p, key));
      if (!fs::exists(out)) r.fail(p, fmt::format("file '{}' does not exist", out));
    }
  };
  path("panel", d.panel);
  path("validation", d.validation);
  path("tree", d.tree);
  r.read(n, "validation_fraction", d.validation_fraction);
  r.check(d.validation_fraction > 0.0 && d.validation_fraction < 1.0, n, "validation_fraction",
          "must lie in (0, 1)");
  if (const YAML::Node c = n["columns"]) {
    r.expect_map(c, "data.columns");
    r.check_keys(c, "data.columns", {"agent", "period", "x", "decision", "q_prefix"});
    r.read(c, "agent", d.schema.agent);
    r.read(c, "period", d.schema.period);
    r.read(c, "x", d.schema.x);
    r.read(c, "decision", d.schema.decision);
    r.read(c, "q_prefix", d.schema.q_prefix);
  }
  if (const YAML::Node del = n["delimiter"]) {
    const auto s = r.as<std::string>(del, "delimiter");
    if (s.size() != 1) r.fail(del, "'delimiter' must be a single character");
    d.schema.delimiter = s[0];
  }
  if (const YAML::Node c = n["choices"]) {
    d.schema.n_choices = r.as<int>(c, "choices");
    r.check(*d.schema.n_choices >= 2, n, "choices", "must be >= 2");
  }
  if (const YAML::Node xr = n["x_range"]) {
    if (!xr.IsSequence() || xr.size() != 2) r.fail(xr, "'x_range' must be a list [min, max]");
    const int lo = r.as<int>(xr[0], "x_range"), hi = r.as<int>(xr[1], "x_range");
    if (hi < lo) r.fail(xr, "'x_range' must have min <= max");
    d.schema.x_range = std::make_pair(lo, hi);
  }
}

void parse_partitioner(const Reader& r, const YAML::Node& n, PartitionerSection& p) {
  r.expect_map(n, "partitioner");
  r.check_keys(n, "partitioner",
               {"budgets", "lambda_rel", "min_observations", "min_lift", "delta", "jobs"});
  r.read_list(n, "budgets", p.budgets);
  r.read_list(n, "lambda_rel", p.lambda_rel);
  r.read(n, "min_observations", p.min_observations);
  r.read(n, "min_lift", p.min_lift);
  r.read(n, "delta", p.delta);
  r.read(n, "jobs", p.jobs);
  for (int b : p.budgets) r.check(b >= 1, n, "budgets", "entries must be >= 1");
  for (double l : p.lambda_rel) r.check(l >= 0.0, n, "lambda_rel", "entries must be >= 0");
  r.check(p.min_observations >= 1, n, "min_observations", "must be >= 1");
  r.check(p.min_lift >= 0.0, n, "min_lift", "must be >= 0");
  r.check(p.delta >= 0.0, n, "delta", "must be >= 0");
  r.check(p.jobs >= 1, n, "jobs", "must be >= 1");
  std::sort(p.budgets.begin(), p.budgets.end());
  p.budgets.erase(std::unique(p.budgets.begin(), p.budgets.end()), p.budgets.end());
}

void parse_estimator(const Reader& r, const YAML::Node& n, EstimatorSection& e) {
  r.expect_map(n, "estimator");
  r.check_keys(n, "estimator",
               {"enabled", "beta", "model", "vi_tolerance", "gradient_tolerance", "max_iterations",
                "restarts", "jitter", "analytic_gradient"});
  EstimateOptions& o = e.options;
  r.read(n, "enabled", e.enabled);
  r.require(n, "beta", o.beta, "estimator");
  r.check(o.beta >= 0.0 && o.beta < 1.0, n, "beta", "must lie in [0, 1)");
  if (const YAML::Node m = n["model"]) {
    const auto s = r.as<std::string>(m, "model");
    if (s == "bus") {
      o.model = ModelKind::Bus;
    } else if (s == "nonparametric") {
      o.model = ModelKind::Nonparametric;
    } else {
      r.fail(m, "'model' must be 'bus' or 'nonparametric'");
    }
  }
  r.read(n, "vi_tolerance", o.vi_tolerance);
  r.read(n, "gradient_tolerance", o.bfgs.gradient_tolerance);
  r.read(n, "max_iterations", o.bfgs.max_iterations);
  r.read(n, "restarts", o.restarts);
  r.read(n, "jitter", o.jitter);
  r.read(n, "analytic_gradient", o.analytic_gradient);
  r.check(o.vi_tolerance > 0.0, n, "vi_tolerance", "must be > 0");
  r.check(o.bfgs.gradient_tolerance > 0.0, n, "gradient_tolerance", "must be > 0");
  r.check(o.bfgs.max_iterations >= 1, n, "max_iterations", "must be >= 1");
  r.check(o.restarts >= 1, n, "restarts", "must be >= 1");
  r.check(o.jitter >= 0.0, n, "jitter", "must be >= 0");
}

void parse_validation(const Reader& r, const YAML::Node& n, ValidationSection& v) {
  r.expect_map(n, "validation");
  r.check_keys(n, "validation", {"mode", "fraction"});
  r.read(n, "mode", v.mode);
  r.check(v.mode == "independent" || v.mode == "split", n, "mode",
          "must be 'independent' or 'split'");
  r.read(n, "fraction", v.fraction);
  r.check(v.fraction > 0.0 && v.fraction < 1.0, n, "fraction", "must lie in (0, 1)");
}

void parse_replication(const Reader& r, const YAML::Node& n, ReplicationSection& p) {
  r.expect_map(n, "replication");
  r.check_keys(n, "replication", {"rounds", "seed", "jobs", "resamples", "band"});
  r.read(n, "rounds", p.rounds);
  r.read(n, "seed", p.seed);
  r.read(n, "jobs", p.jobs);
  r.read(n, "resamples", p.resamples);
  if (const YAML::Node b = n["band"]) {
    if (!b.IsSequence() || b.size() != 2) r.fail(b, "'band' must be a list [low, high]");
    p.band_low = r.as<double>(b[0], "band");
    p.band_high = r.as<double>(b[1], "band");
    if (!(0.0 <= p.band_low && p.band_low < p.band_high && p.band_high <= 1.0)) {
      r.fail(b, "'band' must satisfy 0 <= low < high <= 1");
    }
  }
  r.check(p.rounds >= 1, n, "rounds", "must be >= 1");
  r.check(p.jobs >= 1, n, "jobs", "must be >= 1");
  r.check(p.resamples >= 1, n, "resamples", "must be >= 1");
}

void parse_output(const Reader& r, const YAML::Node& n, OutputSection& o, const std::string& base) {
  r.expect_map(n, "output");
  r.check_keys(n, "output", {"dir", "save_trees", "save_panels"});
  if (const YAML::Node d = n["dir"]) o.dir = resolve_path(base, r.as<std::string>(d, "dir"));
  r.read(n, "save_trees", o.save_trees);
  r.read(n, "save_panels", o.save_panels);
}

ExperimentConfig parse_config(const std::string& text, const std::string& source,
                              const std::string& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(fmt::format("{}:{}:{}: {}", source, e.mark.line + 1, e.mark.column + 1, e.msg));
  }
  const Reader r(source);
  ExperimentConfig c;
  c.source = source;
  if (!root || root.IsNull()) return c;
  r.expect_map(root, "the configuration");
  r.check_keys(root, "the configuration",
               {"name", "dgp", "data", "partitioner", "estimator", "validation", "replication",
                "output"});
  r.read(root, "name", c.name);
  if (const YAML::Node n = root["dgp"]) {
    parse_dgp(r, n, c.dgp);
    c.has_dgp = true;
  }
  if (const YAML::Node n = root["data"]) {
    parse_data(r, n, c.data, base_dir);
    c.has_data = true;
  }
  if (const YAML::Node n = root["partitioner"]) parse_partitioner(r, n, c.partitioner);
  if (const YAML::Node n = root["estimator"]) {
    parse_estimator(r, n, c.estimator);
    c.has_estimator = true;
  } else {
    c.estimator.options.beta = c.dgp.beta;
  }
  if (const YAML::Node n = root["validation"]) parse_validation(r, n, c.validation);
  if (const YAML::Node n = root["replication"]) parse_replication(r, n, c.replication);
  if (const YAML::Node n = root["output"]) parse_output(r, n, c.output, base_dir);
  return c;
}

std::string model_name(ModelKind k) { return k == ModelKind::Bus ? "bus" : "nonparametric"; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string lambda_tag(double l) { return fmt::format("{}", l); }

// Estimated replacement cost attached to each true partition.
std::vector<double> costs_by_truth(const TruePartitionSpec& truth, const Discretization& tree,
                                   const Panel& panel, const ThetaEstimate& est) {
  const int kt = truth.n_partitions(), ke = tree.n_partitions();
  std::vector<long> overlap(static_cast<std::size_t>(kt) * ke, 0);
  for (std::size_t r = 0; r < panel.size(); ++r) {
    ++overlap[static_cast<std::size_t>(truth.tree.assign(panel.q(r))) * ke + tree.assign(panel.q(r))];
  }
  std::vector<double> out(kt, std::numeric_limits<double>::quiet_NaN());
  for (int t = 0; t < kt; ++t) {
    int best = -1;
    long most = 0;
    for (int e = 0; e < ke; ++e) {
      if (overlap[static_cast<std::size_t>(t) * ke + e] > most) {
        most = overlap[static_cast<std::size_t>(t) * ke + e];
        best = e;
      }
    }
    if (best >= 0) out[t] = est.theta[1 + best];
  }
  return out;
}

struct RoundOutput {
  std::vector<RoundRecord> records;
  std::vector<RoundTiming> timings;
  std::vector<std::pair<std::string, std::string>> files;  // relative path, contents
  bool failed = false;
};

RoundOutput run_round(const ExperimentConfig& c, int round) {
  RoundOutput out;
  const std::uint64_t base = c.replication.seed;
  const std::uint64_t round_seed = derive_seed(base, round, 0);
  const auto tag = fmt::format("round_{:03d}", round);
  try {
    auto t0 = std::chrono::steady_clock::now();
    const TruePartitionSpec truth = c.dgp.make_truth(derive_seed(base, round, 1));
    const DgpConfig dgp = c.dgp.make_config(truth, derive_seed(base, round, 2));
    Panel train = simulate(dgp);
    Panel validation;
    if (c.validation.mode == "independent") {
      validation = simulate(c.dgp.make_config(truth, derive_seed(base, round, 3)));
    } else {
      auto [tr, va] = split_train_validation(train, c.validation.fraction, derive_seed(base, round, 5));
      train = std::move(tr);
      validation = std::move(va);
    }
    out.timings.push_back({round, "simulate", seconds_since(t0)});
    if (c.output.save_trees && c.dgp.truth == "random") {
      out.files.emplace_back("trees/" + tag + "_truth.tree", truth.tree.serialize());
      out.files.emplace_back("trees/" + tag + "_truth.json", truth_json(truth));
    }
    if (c.output.save_panels) {
      std::ostringstream a, b;
      write_panel(a, train);
      write_panel(b, validation);
      out.files.emplace_back("panels/" + tag + "_train.csv", a.str());
      out.files.emplace_back("panels/" + tag + "_validation.csv", b.str());
    }

    for (double lambda : c.partitioner.lambda_rel) {
      t0 = std::chrono::steady_clock::now();
      const DiscretizeResult dr =
          discretize(train, c.partitioner.hyperparameters(lambda, c.partitioner.max_budget()),
                     {c.partitioner.jobs});
      const double t_disc = seconds_since(t0);
      out.timings.push_back({round, "discretize lambda=" + lambda_tag(lambda), t_disc});
      if (c.output.save_trees) {
        out.files.emplace_back(fmt::format("trees/{}_lambda_{}.tree", tag, lambda_tag(lambda)),
                               dr.tree.serialize());
      }
      for (int budget : c.partitioner.budgets) {
        RoundRecord rec;
        rec.round = round;
        rec.seed = round_seed;
        rec.lambda_rel = lambda;
        rec.budget = budget;
        rec.seconds_discretize = t_disc;
        const Discretization tree = dr.tree.truncated(budget);
        rec.n_partitions = tree.n_partitions();
        rec.stop = budget < c.partitioner.max_budget() && tree.n_partitions() == budget
                       ? to_string(StopReason::MaxPartitions)
                       : to_string(dr.stop);
        rec.score = score_discretization(train, validation, tree, lambda, c.partitioner.delta);
        rec.matches = match_partitions(truth, tree, train);
        rec.true_partitions = truth.n_partitions();
        if (c.estimator.enabled) {
          t0 = std::chrono::steady_clock::now();
          EstimateOptions o = c.estimator.options;
          o.seed = derive_seed(base, round, 4);
          ThetaEstimate est;
          try {
            est = estimate_theta(train, tree, o);
          } catch (const ConvergenceError& e) {
            est = e.best();
            rec.error = e.what();
          }
          rec.seconds_estimate = seconds_since(t0);
          out.timings.push_back({round, fmt::format("estimate lambda={} budget={}", lambda_tag(lambda), budget),
                                 rec.seconds_estimate});
          rec.estimated = true;
          rec.converged = est.converged;
          rec.loglik = est.loglik;
          rec.names = est.names;
          rec.theta.assign(est.theta.data(), est.theta.data() + est.theta.size());
          rec.std_errors.assign(est.std_errors.data(), est.std_errors.data() + est.std_errors.size());
          if (o.model == ModelKind::Bus) rec.cost_by_truth = costs_by_truth(truth, tree, train, est);
        }
        out.records.push_back(std::move(rec));
      }
    }
  } catch (const std::exception& e) {
    out.failed = true;
    out.records.clear();
    RoundRecord rec;
    rec.round = round;
    rec.seed = round_seed;
    rec.error = e.what();
    rec.stop = "failed";
    out.records.push_back(std::move(rec));
  }
  return out;
}

void write_file(const fs::path& p, const std::string& contents) {
  fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot write '" + p.string() + "'");
  f << contents;
  if (!f) throw Error("failed writing '" + p.string() + "'");
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + "\"";
}

// Minimal CSV row splitter that understands double-quoted fields.
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

double to_double(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::strtod(s.c_str(), nullptr);
}

int max_true_partitions(const std::vector<RoundRecord>& recs) {
  int k = 0;
  for (const auto& r : recs) k = std::max(k, static_cast<int>(r.cost_by_truth.size()));
  return k;
}

}  // namespace

TruePartitionSpec DgpSection::make_truth(std::uint64_t seed) const {
  if (truth == "sim1") return sim1_truth(dissimilar_costs, dissimilar_transitions);
  return random_discretization(seed, n_partitions, relevant_dims, total_dims, random_mileage);
}

DgpConfig DgpSection::make_config(TruePartitionSpec t, std::uint64_t seed) const {
  DgpConfig c;
  c.truth = std::move(t);
  c.transition = transition;
  c.sparse_steps = sparse_steps;
  c.n_buses = n_buses;
  c.n_periods = n_periods;
  c.c_m = c_m;
  c.beta = beta;
  c.seed = seed;
  return c;
}

std::string DgpSection::label() const {
  if (truth == "sim1") {
    return fmt::format("costs={} mileage={} transition={}",
                       dissimilar_costs ? "dissimilar" : "similar",
                       dissimilar_transitions ? "dissimilar" : "similar", to_string(transition));
  }
  return fmt::format("random({}) mileage={} transition={}", n_partitions,
                     random_mileage ? "dissimilar" : "similar", to_string(transition));
}

Hyperparameters PartitionerSection::hyperparameters(double lambda, int budget) const {
  Hyperparameters hp;
  hp.min_observations = min_observations;
  hp.min_lift = min_lift;
  hp.max_partitions = budget;
  hp.lambda_rel = lambda;
  hp.delta = delta;
  return hp;
}

int PartitionerSection::max_budget() const {
  return budgets.empty() ? 1 : *std::max_element(budgets.begin(), budgets.end());
}

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::string& source) {
  return parse_config(text, source, "");
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError(path + ": cannot open configuration file");
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string dir = fs::path(path).parent_path().string();
  return parse_config(ss.str(), path, dir.empty() ? "." : dir);
}

std::string ExperimentConfig::to_yaml() const {
  YAML::Emitter e;
  e << YAML::BeginMap << YAML::Key << "name" << YAML::Value << name;
  if (has_dgp) {
    e << YAML::Key << "dgp" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "truth" << YAML::Value << dgp.truth;
    e << YAML::Key << "dissimilar_costs" << YAML::Value << dgp.dissimilar_costs;
    e << YAML::Key << "dissimilar_transitions" << YAML::Value << dgp.dissimilar_transitions;
    e << YAML::Key << "partitions" << YAML::Value << dgp.n_partitions;
    e << YAML::Key << "relevant_dims" << YAML::Value << dgp.relevant_dims;
    e << YAML::Key << "total_dims" << YAML::Value << dgp.total_dims;
    e << YAML::Key << "random_mileage" << YAML::Value << dgp.random_mileage;
    e << YAML::Key << "transition" << YAML::Value << to_string(dgp.transition);
    e << YAML::Key << "sparse_steps" << YAML::Value << dgp.sparse_steps;
    e << YAML::Key << "buses" << YAML::Value << dgp.n_buses;
    e << YAML::Key << "periods" << YAML::Value << dgp.n_periods;
    e << YAML::Key << "c_m" << YAML::Value << dgp.c_m;
    e << YAML::Key << "beta" << YAML::Value << dgp.beta;
    e << YAML::EndMap;
  }
  if (has_data) {
    e << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "panel" << YAML::Value << data.panel;
    e << YAML::Key << "validation" << YAML::Value << data.validation;
    e << YAML::Key << "validation_fraction" << YAML::Value << data.validation_fraction;
    e << YAML::Key << "tree" << YAML::Value << data.tree;
    e << YAML::EndMap;
  }
  e << YAML::Key << "partitioner" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "budgets" << YAML::Value << YAML::Flow << partitioner.budgets;
  e << YAML::Key << "lambda_rel" << YAML::Value << YAML::Flow << partitioner.lambda_rel;
  e << YAML::Key << "min_observations" << YAML::Value << partitioner.min_observations;
  e << YAML::Key << "min_lift" << YAML::Value << partitioner.min_lift;
  e << YAML::Key << "delta" << YAML::Value << partitioner.delta;
  e << YAML::Key << "jobs" << YAML::Value << partitioner.jobs;
  e << YAML::EndMap;
  const EstimateOptions& o = estimator.options;
  e << YAML::Key << "estimator" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "enabled" << YAML::Value << estimator.enabled;
  e << YAML::Key << "beta" << YAML::Value << o.beta;
  e << YAML::Key << "model" << YAML::Value << model_name(o.model);
  e << YAML::Key << "vi_tolerance" << YAML::Value << o.vi_tolerance;
  e << YAML::Key << "gradient_tolerance" << YAML::Value << o.bfgs.gradient_tolerance;
  e << YAML::Key << "max_iterations" << YAML::Value << o.bfgs.max_iterations;
  e << YAML::Key << "restarts" << YAML::Value << o.restarts;
  e << YAML::Key << "jitter" << YAML::Value << o.jitter;
  e << YAML::Key << "analytic_gradient" << YAML::Value << o.analytic_gradient;
  e << YAML::EndMap;
  e << YAML::Key << "validation" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "mode" << YAML::Value << validation.mode;
  e << YAML::Key << "fraction" << YAML::Value << validation.fraction;
  e << YAML::EndMap;
  e << YAML::Key << "replication" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "rounds" << YAML::Value << replication.rounds;
  e << YAML::Key << "seed" << YAML::Value << replication.seed;
  e << YAML::Key << "jobs" << YAML::Value << replication.jobs;
  e << YAML::Key << "resamples" << YAML::Value << replication.resamples;
  e << YAML::Key << "band" << YAML::Value << YAML::Flow << YAML::BeginSeq << replication.band_low
    << replication.band_high << YAML::EndSeq;
  e << YAML::EndMap;
  e << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "dir" << YAML::Value << output.dir;
  e << YAML::Key << "save_trees" << YAML::Value << output.save_trees;
  e << YAML::Key << "save_panels" << YAML::Value << output.save_panels;
  e << YAML::EndMap;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t round, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(round), static_cast<std::uint32_t>(round >> 32),
                    static_cast<std::uint32_t>(stream), 0x5eedu};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

double RoundRecord::param(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return theta[i];
  }
  return std::numeric_limits<double>::quiet_NaN();
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  if (config.partitioner.budgets.empty() || config.partitioner.lambda_rel.empty()) {
    throw ConfigError(config.source + ": partition budgets and lambda_rel grid must be nonempty");
  }
  const int rounds = config.replication.rounds;
  std::vector<RoundOutput> outputs(rounds);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < rounds; r = next++) outputs[r] = run_round(config, r);
  };
  const int jobs = std::max(1, std::min(config.replication.jobs, rounds));
  std::vector<std::thread> pool;
  for (int i = 1; i < jobs; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  ExperimentResult result;
  result.config = config;
  result.label = config.has_dgp ? config.dgp.label() : config.name;
  for (auto& o : outputs) {
    result.failed_rounds += o.failed;
    for (auto& rec : o.records) result.records.push_back(std::move(rec));
    for (auto& t : o.timings) result.timings.push_back(std::move(t));
  }
  if (config.output.save_trees || config.output.save_panels) {
    const fs::path dir(config.output.dir);
    for (const auto& o : outputs) {
      for (const auto& [rel, contents] : o.files) write_file(dir / rel, contents);
    }
    if (config.output.save_trees && config.dgp.truth == "sim1") {
      const auto truth = config.dgp.make_truth(0);
      write_file(dir / "trees/truth.tree", truth.tree.serialize());
      write_file(dir / "trees/truth.json", truth_json(truth));
    }
  }
  return result;
}

void write_experiment(const ExperimentResult& result) {
  const ExperimentConfig& c = result.config;
  const fs::path dir(c.output.dir);
  fs::create_directories(dir);
  const int kt = max_true_partitions(result.records);

  std::string rounds =
      "round,seed,lambda_rel,budget,partitions,stop,score,matches,true_partitions,estimated,"
      "converged,loglik,c_m";
  for (int k = 1; k <= kt; ++k) rounds += fmt::format(",f_dc_{}", k);
  rounds += ",seconds_discretize,seconds_estimate,error\n";
  std::string estimates = "round,lambda_rel,budget,param,estimate,std_error\n";
  for (const auto& r : result.records) {
    rounds += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}", r.round, r.seed, r.lambda_rel,
                          r.budget, r.n_partitions, r.stop, r.score, r.matches, r.true_partitions,
                          r.estimated ? 1 : 0, r.converged ? 1 : 0,
                          r.estimated ? fmt::format("{}", r.loglik) : "",
                          r.estimated ? fmt::format("{}", r.param("c_m")) : "");
    for (int k = 0; k < kt; ++k) {
      rounds += k < static_cast<int>(r.cost_by_truth.size()) ? fmt::format(",{}", r.cost_by_truth[k])
                                                             : std::string(",");
    }
    rounds += fmt::format(",{:.3f},{:.3f},{}\n", r.seconds_discretize, r.seconds_estimate,
                          csv_field(r.error));
    for (std::size_t i = 0; i < r.names.size(); ++i) {
      estimates += fmt::format("{},{},{},{},{},{}\n", r.round, r.lambda_rel, r.budget, r.names[i],
                               r.theta[i], i < r.std_errors.size() ? r.std_errors[i] : NAN);
    }
  }
  write_file(dir / "rounds.csv", rounds);
  write_file(dir / "estimates.csv", estimates);

  std::string timings = "round,phase,seconds\n";
  for (const auto& t : result.timings) {
    timings += fmt::format("{},{},{:.6f}\n", t.round, csv_field(t.phase), t.seconds);
  }
  write_file(dir / "timings.csv", timings);

  nlohmann::json run;
  run["name"] = c.name;
  run["label"] = result.label;
  run["seed"] = c.replication.seed;
  run["rounds"] = c.replication.rounds;
  run["resamples"] = c.replication.resamples;
  run["band"] = {c.replication.band_low, c.replication.band_high};
  run["budgets"] = c.partitioner.budgets;
  run["lambda_rel"] = c.partitioner.lambda_rel;
  run["failed_rounds"] = result.failed_rounds;
  write_file(dir / "run.json", run.dump(2) + "\n");
  write_file(dir / "config.yaml", c.to_yaml());

  const auto rows = aggregate(result);
  write_file(dir / "aggregate.csv", aggregate_csv(rows));
  write_file(dir / "aggregate.txt", emit_report({result}));
}

ExperimentResult read_experiment(const std::string& dir_name) {
  const fs::path dir(dir_name);
  ExperimentResult result;
  {
    std::ifstream f(dir / "run.json");
    if (!f) throw Error("missing run.json in '" + dir_name + "'");
    nlohmann::json run;
    try {
      f >> run;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("run.json in '" + dir_name + "': " + e.what());
    }
    ExperimentConfig& c = result.config;
    c.name = run.value("name", std::string("experiment"));
    result.label = run.value("label", c.name);
    c.replication.seed = run.value("seed", std::uint64_t{0});
    c.replication.rounds = run.value("rounds", 1);
    c.replication.resamples = run.value("resamples", 1000);
    if (run.contains("band")) {
      c.replication.band_low = run["band"][0].get<double>();
      c.replication.band_high = run["band"][1].get<double>();
    }
    c.partitioner.budgets = run.value("budgets", std::vector<int>{});
    c.partitioner.lambda_rel = run.value("lambda_rel", std::vector<double>{});
    c.output.dir = dir_name;
    result.failed_rounds = run.value("failed_rounds", 0);
  }
  std::ifstream f(dir / "rounds.csv");
  if (!f) throw Error("missing rounds.csv in '" + dir_name + "'");
  std::string line;
  std::getline(f, line);
  const std::vector<std::string> header = split_csv(line);
  auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("rounds.csv lacks column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::size_t> cost_cols;
  for (int k = 1;; ++k) {
    const auto it = std::find(header.begin(), header.end(), fmt::format("f_dc_{}", k));
    if (it == header.end()) break;
    cost_cols.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  const std::size_t c_round = col("round"), c_seed = col("seed"), c_lambda = col("lambda_rel"),
                    c_budget = col("budget"), c_parts = col("partitions"), c_stop = col("stop"),
                    c_score = col("score"), c_matches = col("matches"),
                    c_true = col("true_partitions"), c_est = col("estimated"),
                    c_conv = col("converged"), c_ll = col("loglik"), c_cm = col("c_m"),
                    c_err = col("error");
  long row = 1;
  while (std::getline(f, line)) {
    ++row;
    if (line.empty()) continue;
    const auto v = split_csv(line);
    if (v.size() != header.size()) {
      throw ParseError(fmt::format("rounds.csv line {}: expected {} fields, found {}", row,
                                   header.size(), v.size()),
                       row);
    }
    RoundRecord r;
    r.round = std::stoi(v[c_round]);
    r.seed = std::stoull(v[c_seed]);
    r.lambda_rel = to_double(v[c_lambda]);
    r.budget = std::stoi(v[c_budget]);
    r.n_partitions = std::stoi(v[c_parts]);
    r.stop = v[c_stop];
    r.score = to_double(v[c_score]);
    r.matches = std::stoi(v[c_matches]);
    r.true_partitions = std::stoi(v[c_true]);
    r.estimated = v[c_est] == "1";
    r.converged = v[c_conv] == "1";
    r.error = v[c_err];
    if (r.estimated) {
      r.loglik = to_double(v[c_ll]);
      r.names = {"c_m"};
      r.theta = {to_double(v[c_cm])};
      for (std::size_t cc : cost_cols) {
        if (!v[cc].empty()) r.cost_by_truth.push_back(to_double(v[cc]));
      }
    }
    result.records.push_back(std::move(r));
  }
  return result;
}

}  // namespace ddcpart
