#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include <fmt/format.h>

#include "ddcpart/experiment.hpp"

namespace ddcpart {

namespace {

double quantile(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

int precision_of(const std::string& metric) {
  if (metric == "score" || metric == "loglik") return 1;
  if (metric == "matches" || metric == "partitions") return 2;
  return 3;
}

// Metric values of one record, in report order.
std::vector<std::pair<std::string, double>> metrics_of(const RoundRecord& r) {
  std::vector<std::pair<std::string, double>> out{
      {"score", r.score}, {"matches", r.matches}, {"partitions", r.n_partitions}};
  if (r.estimated && r.converged) {
    const double cm = r.param("c_m");
    if (!std::isnan(cm)) out.emplace_back("c_m", cm);
    for (std::size_t k = 0; k < r.cost_by_truth.size(); ++k) {
      out.emplace_back(fmt::format("f_dc_{}", k + 1), r.cost_by_truth[k]);
    }
    out.emplace_back("loglik", r.loglik);
  }
  return out;
}

int metric_rank(const std::string& m) {
  static const std::vector<std::string> order{"score", "matches", "partitions", "c_m"};
  const auto it = std::find(order.begin(), order.end(), m);
  if (it != order.end()) return static_cast<int>(it - order.begin());
  if (m.rfind("f_dc_", 0) == 0) return 10 + std::stoi(m.substr(5));
  return 1000;  // loglik last
}

std::string cell(const Summary& s, int prec) {
  if (s.n == 0) return "-";
  return fmt::format("{:.{}f} ({:.{}f}, {:.{}f})", s.mean, prec, s.low, prec, s.high, prec);
}

}  // namespace

Summary bootstrap_summary(const std::vector<double>& values, int resamples, double band_low,
                          double band_high, std::uint64_t seed) {
  Summary s;
  s.n = static_cast<long>(values.size());
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> means(std::max(1, resamples));
  for (auto& m : means) {
    double acc = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) acc += values[pick(rng)];
    m = acc / static_cast<double>(values.size());
  }
  std::sort(means.begin(), means.end());
  s.low = quantile(means, band_low);
  s.high = quantile(means, band_high);
  if (values.size() == 1) s.low = s.high = s.mean;
  return s;
}

std::vector<AggregateRow> aggregate(const ExperimentResult& result) {
  const auto& rep = result.config.replication;
  // (lambda, budget) -> metric -> values in record order
  std::map<std::pair<double, int>, std::map<std::string, std::vector<double>>> cells;
  for (const auto& r : result.records) {
    if (r.stop == "failed") continue;
    for (const auto& [name, v] : metrics_of(r)) {
      if (std::isfinite(v)) cells[{r.lambda_rel, r.budget}][name].push_back(v);
    }
  }
  std::vector<AggregateRow> rows;
  for (const auto& [facet, metrics] : cells) {
    std::vector<std::string> names;
    for (const auto& [m, _] : metrics) names.push_back(m);
    std::stable_sort(names.begin(), names.end(),
                     [](const auto& a, const auto& b) { return metric_rank(a) < metric_rank(b); });
    for (const auto& m : names) {
      const std::uint64_t seed =
          derive_seed(rep.seed, fnv1a(fmt::format("{}|{}", facet.first, facet.second)), fnv1a(m));
      rows.push_back({facet.first, facet.second, m,
                      bootstrap_summary(metrics.at(m), rep.resamples, rep.band_low, rep.band_high,
                                        seed)});
    }
  }
  return rows;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::string out = "lambda_rel,budget,metric,n,mean,low,high\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{}\n", r.lambda_rel, r.budget, r.metric, r.summary.n,
                       r.summary.mean, r.summary.low, r.summary.high);
  }
  return out;
}

std::string emit_report(const std::vector<ExperimentResult>& results) {
  if (results.empty()) return "";
  struct Source {
    const ExperimentResult* result;
    std::vector<AggregateRow> rows;
  };
  std::vector<Source> sources;
  std::set<int> budgets;
  std::set<double> lambdas;
  std::set<std::string> metric_set;
  for (const auto& r : results) {
    sources.push_back({&r, aggregate(r)});
    for (const auto& row : sources.back().rows) {
      budgets.insert(row.budget);
      lambdas.insert(row.lambda_rel);
      metric_set.insert(row.metric);
    }
  }
  std::vector<std::string> metrics(metric_set.begin(), metric_set.end());
  std::stable_sort(metrics.begin(), metrics.end(),
                   [](const auto& a, const auto& b) { return metric_rank(a) < metric_rank(b); });
  // One budget and several lambda values: lambda becomes the column axis.
  const bool lambda_columns = budgets.size() == 1 && lambdas.size() > 1;

  std::string out;
  for (const auto& metric : metrics) {
    const int prec = precision_of(metric);
    std::vector<std::string> header{""};
    if (lambda_columns) {
      for (double l : lambdas) header.push_back(fmt::format("lambda_rel={}", l));
    } else {
      for (int b : budgets) header.push_back(fmt::format("partitions={}", b));
    }
    std::vector<std::vector<std::string>> table{header};
    long rounds = 0;
    for (const auto& src : sources) {
      std::set<double> own_lambdas;
      for (const auto& row : src.rows) own_lambdas.insert(row.lambda_rel);
      auto find = [&](double l, int b) -> const AggregateRow* {
        for (const auto& row : src.rows) {
          if (row.metric == metric && row.lambda_rel == l && row.budget == b) return &row;
        }
        return nullptr;
      };
      auto fill = [&](const AggregateRow* row) {
        if (!row) return std::string("-");
        rounds = std::max(rounds, row->summary.n);
        return cell(row->summary, prec);
      };
      if (lambda_columns) {
        std::vector<std::string> line{src.result->label};
        for (double l : lambdas) line.push_back(fill(find(l, *budgets.begin())));
        table.push_back(std::move(line));
      } else {
        for (double l : own_lambdas) {
          std::vector<std::string> line{own_lambdas.size() > 1 || lambdas.size() > 1
                                            ? fmt::format("{} lambda_rel={}", src.result->label, l)
                                            : src.result->label};
          for (int b : budgets) line.push_back(fill(find(l, b)));
          table.push_back(std::move(line));
        }
      }
    }
    if (table.size() == 1) continue;
    const auto& rep = results.front().config.replication;
    out += fmt::format("{}: mean ({:g}%, {:g}%) bootstrap band, up to {} rounds\n", metric,
                       100.0 * rep.band_low, 100.0 * rep.band_high, rounds);
    std::vector<std::size_t> width(table.front().size(), 0);
    for (const auto& line : table) {
      for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
    }
    for (const auto& line : table) {
      std::string text;
      for (std::size_t i = 0; i < line.size(); ++i) {
        text += i == 0 ? fmt::format("{:<{}}", line[i], width[i])
                       : fmt::format("  {:>{}}", line[i], width[i]);
      }
      while (!text.empty() && text.back() == ' ') text.pop_back();
      out += text + "\n";
    }
    out += "\n";
  }
  return out;
}

}  // namespace ddcpart
