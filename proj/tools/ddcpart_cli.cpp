// Command-line driver: simulate, discretize, tune, estimate, experiment, report.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "ddcpart/counts.hpp"
#include "ddcpart/experiment.hpp"
#include "ddcpart/nfxp.hpp"
#include "ddcpart/panel.hpp"
#include "ddcpart/partitioner.hpp"
#include "ddcpart/simulator.hpp"

namespace fs = std::filesystem;
using namespace ddcpart;

namespace {

enum Exit { kOk = 0, kUsage = 1, kValidation = 2, kRuntime = 3 };

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string out;
  std::vector<std::string> dirs;  // report inputs
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt_double(double v) { return fmt::format("{}", v); }

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot write '" + p.string() + "'");
  f << text;
}

ExperimentConfig load_config(const Flags& f) {
  if (f.config.empty()) throw UsageError("--config is required");
  ExperimentConfig c = ExperimentConfig::load(f.config);
  if (f.seed) c.replication.seed = *f.seed;
  if (f.jobs) {
    c.replication.jobs = *f.jobs;
    c.partitioner.jobs = *f.jobs;
  }
  if (!f.out.empty()) c.output.dir = f.out;
  return c;
}

Panel training_panel(const ExperimentConfig& c) {
  if (!c.has_data || c.data.panel.empty()) {
    throw ConfigError(c.source + ": this command needs data.panel");
  }
  return load_panel(c.data.panel, c.data.schema);
}

// Validation panel from file, or a seeded agent split of the training panel.
std::pair<Panel, Panel> train_and_validation(const ExperimentConfig& c) {
  Panel train = training_panel(c);
  if (!c.data.validation.empty()) {
    PanelSchema s = c.data.schema;
    s.x_range = std::make_pair(train.meta().x_min, train.meta().x_max);
    s.n_choices = train.meta().n_choices;
    return {std::move(train), load_panel(c.data.validation, s)};
  }
  return split_train_validation(train, c.data.validation_fraction, c.replication.seed);
}

int cmd_simulate(const Flags& f) {
  ExperimentConfig c = load_config(f);
  if (!c.has_dgp) throw ConfigError(c.source + ": simulate needs a dgp section");
  const fs::path out(c.output.dir);
  const auto truth = c.dgp.make_truth(derive_seed(c.replication.seed, 0, 1));
  const Panel p = simulate(c.dgp.make_config(truth, c.replication.seed));
  fs::create_directories(out);
  save_panel((out / "panel.csv").string(), p);
  truth.tree.save((out / "truth.tree").string());
  write_text(out / "truth.json", truth_json(truth));
  std::cout << "simulated " << p.n_agents() << " buses, " << p.size() << " observations -> "
            << (out / "panel.csv").string() << "\n";
  return kOk;
}

std::string trace_csv(const DiscretizeResult& r) {
  std::string s = "step,partition,dim,threshold,gain,gain_f_dc,gain_f_tr,recomputed,objective\n";
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    const auto& e = r.trace[i];
    s += std::to_string(i + 1) + "," + std::to_string(e.split.partition) + "," +
         std::to_string(e.split.dim) + "," + fmt_double(e.split.threshold) + "," +
         fmt_double(e.gain.combined) + "," + fmt_double(e.gain.f_dc) + "," + fmt_double(e.gain.f_tr) +
         "," + fmt_double(e.recomputed.combined) + "," + fmt_double(e.after.combined) + "\n";
  }
  return s;
}

int cmd_discretize(const Flags& f) {
  const ExperimentConfig c = load_config(f);
  const Panel p = training_panel(c);
  const auto& part = c.partitioner;
  if (part.lambda_rel.size() != 1) {
    throw ConfigError(c.source + ": discretize takes a single lambda_rel (use tune for a grid)");
  }
  const DiscretizeResult r =
      discretize(p, part.hyperparameters(part.lambda_rel[0], part.max_budget()), {part.jobs});
  const fs::path out(c.output.dir);
  fs::create_directories(out);
  r.tree.save((out / "tree.txt").string());
  write_text(out / "trace.csv", trace_csv(r));
  std::cout << "partitions: " << r.tree.n_partitions() << " (stop: " << to_string(r.stop)
            << "), lambda_adj = " << fmt_double(r.lambda_adj)
            << (r.lambda_degenerate ? " (transition part is zero at the root)" : "") << "\n";
  return kOk;
}

int cmd_tune(const Flags& f) {
  const ExperimentConfig c = load_config(f);
  auto [train, val] = train_and_validation(c);
  std::vector<Hyperparameters> grid;
  for (double l : c.partitioner.lambda_rel) {
    for (int b : c.partitioner.budgets) grid.push_back(c.partitioner.hyperparameters(l, b));
  }
  const TuneResult r = tune(train, val, grid, {c.partitioner.jobs});
  const fs::path out(c.output.dir);
  fs::create_directories(out);
  std::string csv = "lambda_rel,max_partitions,partitions,score,best\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    csv += fmt_double(grid[i].lambda_rel) + "," + std::to_string(grid[i].max_partitions) + "," +
           std::to_string(r.trees[i].n_partitions()) + "," + fmt_double(r.scores[i]) + "," +
           (i == r.best ? "1" : "0") + "\n";
  }
  write_text(out / "tune.csv", csv);
  r.tree.save((out / "tree.txt").string());
  std::cout << "best: lambda_rel = " << fmt_double(r.hyperparameters.lambda_rel)
            << ", max_partitions = " << r.hyperparameters.max_partitions
            << ", score = " << fmt_double(r.scores[r.best]) << "\n";
  return kOk;
}

int cmd_estimate(const Flags& f) {
  const ExperimentConfig c = load_config(f);
  if (!c.has_estimator) throw ConfigError(c.source + ": estimate needs an estimator section");
  const Panel p = training_panel(c);
  Discretization tree;
  if (!c.data.tree.empty()) {
    tree = Discretization::load(c.data.tree);
  } else {
    const auto& part = c.partitioner;
    tree = discretize(p, part.hyperparameters(part.lambda_rel.front(), part.max_budget()),
                      {part.jobs})
               .tree;
  }
  EstimateOptions o = c.estimator.options;
  o.seed = c.replication.seed;
  ThetaEstimate e;
  int status = kOk;
  try {
    e = estimate_theta(p, tree, o);
  } catch (const ConvergenceError& err) {
    e = err.best();
    std::cerr << "error: " << err.what() << "\n";
    status = kRuntime;
  }
  const fs::path out(c.output.dir);
  fs::create_directories(out);
  std::string csv = "param,estimate,std_error\n";
  for (std::size_t i = 0; i < e.names.size(); ++i) {
    csv += e.names[i] + "," + fmt_double(e.theta[static_cast<Eigen::Index>(i)]) + "," +
           fmt_double(e.std_errors.size() ? e.std_errors[static_cast<Eigen::Index>(i)] : NAN) + "\n";
  }
  write_text(out / "estimate.csv", csv);
  tree.save((out / "tree.txt").string());

  std::string text;
  text += "partitions:        " + std::to_string(tree.n_partitions()) + "\n";
  text += "observations:      " + std::to_string(e.n_observations) + "\n";
  text += "log-likelihood:    " + fmt_double(e.loglik) + "\n";
  text += "gradient norm:     " + fmt_double(e.gradient_norm) + "\n";
  text += "iterations:        " + std::to_string(e.iterations) + "\n";
  text += "converged:         " + std::string(e.converged ? "yes" : "no") + " (" +
          std::to_string(e.restarts_converged) + " of " + std::to_string(o.restarts) +
          " restarts)\n";
  text += "filled transitions: " + std::to_string(e.filled_rows.size()) + "\n";
  text += "unvisited states:  " + std::to_string(e.unvisited_states.size()) + "\n\n";
  std::size_t w = 5;
  for (const auto& n : e.names) w = std::max(w, n.size());
  for (std::size_t i = 0; i < e.names.size(); ++i) {
    text += e.names[i] + std::string(w + 2 - e.names[i].size(), ' ') +
            fmt_double(e.theta[static_cast<Eigen::Index>(i)]) + "  (" +
            fmt_double(e.std_errors.size() ? e.std_errors[static_cast<Eigen::Index>(i)] : NAN) +
            ")\n";
  }
  write_text(out / "estimate.txt", text);
  std::cout << text;
  return status;
}

int cmd_experiment(const Flags& f) {
  const ExperimentConfig c = load_config(f);
  if (!c.has_dgp) throw ConfigError(c.source + ": experiment needs a dgp section");
  if (!c.has_estimator) throw ConfigError(c.source + ": experiment needs an estimator section");
  const ExperimentResult r = run_experiment(c);
  write_experiment(r);
  std::cout << emit_report({r});
  for (const auto& rec : r.records) {
    if (rec.stop == "failed") std::cerr << "round " << rec.round << " failed: " << rec.error << "\n";
  }
  std::cout << "wrote " << c.output.dir << "\n";
  return r.failed_rounds > 0 ? kRuntime : kOk;
}

int cmd_report(const Flags& f) {
  std::vector<std::string> dirs = f.dirs;
  if (dirs.empty() && !f.config.empty()) dirs.push_back(ExperimentConfig::load(f.config).output.dir);
  if (dirs.empty()) throw UsageError("report needs one or more experiment directories");
  std::vector<ExperimentResult> results;
  for (const auto& d : dirs) results.push_back(read_experiment(d));
  const std::string text = emit_report(results);
  if (!f.out.empty()) write_text(fs::path(f.out) / "report.txt", text);
  std::cout << text;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Covariate-space discretization and estimation for dynamic discrete choice models"};
  app.require_subcommand(1);
  Flags flags;
  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", flags.config, "YAML configuration file");
    if (config_required) opt->required();
    sub->add_option("--seed", flags.seed, "base seed (overrides replication.seed)");
    sub->add_option("--jobs", flags.jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", flags.out, "output directory (overrides output.dir)");
  };
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Flags&);
  };
  const Command commands[] = {
      {"simulate", "simulate a panel from the dgp section", cmd_simulate},
      {"discretize", "discretize data.panel with the partitioner section", cmd_discretize},
      {"tune", "pick lambda_rel and the partition budget on validation data", cmd_tune},
      {"estimate", "estimate utility parameters on data.panel", cmd_estimate},
      {"experiment", "run a Monte Carlo experiment", cmd_experiment},
      {"report", "tabulate one or more experiment directories", cmd_report},
  };
  std::vector<std::pair<CLI::App*, int (*)(const Flags&)>> subs;
  for (const auto& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    const bool is_report = std::string(cmd.name) == "report";
    add_common(sub, !is_report);
    if (is_report) sub->add_option("dirs", flags.dirs, "experiment output directories");
    subs.emplace_back(sub, cmd.run);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    for (const auto& [sub, run] : subs) {
      if (sub->parsed()) return run(flags);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return kValidation;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kValidation;
  } catch (const SchemaError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kValidation;
  } catch (const ParseError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kValidation;
  } catch (const ArgumentError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
