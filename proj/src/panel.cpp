#include "ddcpart/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "ddcpart/error.hpp"

namespace ddcpart {

Panel::Panel(std::vector<Observation> observations, PanelMeta meta) : meta_(meta) {
  if (meta_.dims < 0 || meta_.n_choices < 1 || meta_.x_max < meta_.x_min) {
    throw ArgumentError("panel metadata is inconsistent");
  }
  std::stable_sort(observations.begin(), observations.end(),
                   [](const Observation& a, const Observation& b) {
                     return a.agent_id != b.agent_id ? a.agent_id < b.agent_id
                                                     : a.period < b.period;
                   });
  const std::size_t n = observations.size();
  agent_.reserve(n);
  period_.reserve(n);
  x_.reserve(n);
  decision_.reserve(n);
  q_.reserve(n * meta_.dims);

  for (std::size_t r = 0; r < n; ++r) {
    const Observation& o = observations[r];
    if (static_cast<int>(o.q.size()) != meta_.dims) {
      throw ValidationError("agent " + std::to_string(o.agent_id) + " period " +
                            std::to_string(o.period) + ": q has length " +
                            std::to_string(o.q.size()) + ", expected " +
                            std::to_string(meta_.dims));
    }
    if (o.decision < 0 || o.decision >= meta_.n_choices) {
      throw ValidationError("agent " + std::to_string(o.agent_id) + " period " +
                            std::to_string(o.period) + ": decision " +
                            std::to_string(o.decision) + " outside 0.." +
                            std::to_string(meta_.n_choices - 1));
    }
    if (o.x < meta_.x_min || o.x > meta_.x_max) {
      throw ValidationError("agent " + std::to_string(o.agent_id) + " period " +
                            std::to_string(o.period) + ": x=" + std::to_string(o.x) +
                            " outside declared range");
    }
    const bool new_agent = r == 0 || observations[r - 1].agent_id != o.agent_id;
    if (new_agent) {
      if (!agents_.empty()) agents_.back().end = r;
      agents_.push_back({o.agent_id, r, n});
    } else {
      const int prev_period = observations[r - 1].period;
      if (o.period == prev_period) {
        throw ValidationError("agent " + std::to_string(o.agent_id) + ": duplicate period " +
                              std::to_string(o.period));
      }
      if (o.period != prev_period + 1) {
        throw ValidationError("agent " + std::to_string(o.agent_id) +
                              ": periods are not consecutive (gap after period " +
                              std::to_string(prev_period) + ")");
      }
    }
    agent_.push_back(o.agent_id);
    period_.push_back(o.period);
    x_.push_back(o.x);
    decision_.push_back(o.decision);
    q_.insert(q_.end(), o.q.begin(), o.q.end());
  }
}

Observation Panel::observation(std::size_t row) const {
  Observation o;
  o.agent_id = agent_[row];
  o.period = period_[row];
  o.x = x_[row];
  o.decision = decision_[row];
  auto qs = q(row);
  o.q.assign(qs.begin(), qs.end());
  return o;
}

Panel Panel::select_agents(std::span<const std::size_t> agent_indices) const {
  std::vector<Observation> obs;
  for (std::size_t a : agent_indices) {
    const AgentSpan& s = agents_.at(a);
    for (std::size_t r = s.begin; r < s.end; ++r) obs.push_back(observation(r));
  }
  return Panel(std::move(obs), meta_);
}

namespace {

std::vector<std::string_view> split_line(std::string_view line, char delim) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(delim, start);
    std::string_view cell = line.substr(start, pos == std::string_view::npos ? pos : pos - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r'))
      cell.remove_suffix(1);
    cells.push_back(cell);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

template <typename T>
T parse_number(std::string_view cell, long row, const std::string& column) {
  T value{};
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty()) {
    throw ParseError("row " + std::to_string(row) + ", column '" + column +
                         "': not a number: '" + std::string(cell) + "'",
                     row);
  }
  return value;
}

void append_double(std::string& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

}  // namespace

Panel read_panel(std::istream& in, const PanelSchema& schema) {
  std::string line;
  long row = 1;
  if (!std::getline(in, line)) throw SchemaError("panel file is empty");
  const auto header = split_line(line, schema.delimiter);

  auto find_column = [&](const std::string& name) -> std::size_t {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name) return c;
    }
    throw SchemaError("missing column '" + name + "'");
  };
  const std::size_t c_agent = find_column(schema.agent);
  const std::size_t c_period = find_column(schema.period);
  const std::size_t c_x = find_column(schema.x);
  const std::size_t c_d = find_column(schema.decision);

  std::map<int, std::size_t> q_columns;  // q index (1-based) -> column
  for (std::size_t c = 0; c < header.size(); ++c) {
    std::string_view h = header[c];
    if (h.size() <= schema.q_prefix.size() || h.substr(0, schema.q_prefix.size()) != schema.q_prefix)
      continue;
    std::string_view digits = h.substr(schema.q_prefix.size());
    int idx = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), idx);
    if (ec == std::errc() && ptr == digits.data() + digits.size() && idx >= 1) q_columns[idx] = c;
  }
  const int dims = static_cast<int>(q_columns.size());
  for (int i = 1; i <= dims; ++i) {
    if (!q_columns.count(i)) {
      throw SchemaError("missing column '" + schema.q_prefix + std::to_string(i) + "'");
    }
  }

  std::vector<Observation> obs;
  int max_d = 0, x_lo = 0, x_hi = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_line(line, schema.delimiter);
    if (cells.size() != header.size()) {
      throw ParseError("row " + std::to_string(row) + ": expected " +
                           std::to_string(header.size()) + " cells, found " +
                           std::to_string(cells.size()),
                       row);
    }
    Observation o;
    o.agent_id = parse_number<std::int64_t>(cells[c_agent], row, schema.agent);
    o.period = parse_number<int>(cells[c_period], row, schema.period);
    o.x = parse_number<int>(cells[c_x], row, schema.x);
    o.decision = parse_number<int>(cells[c_d], row, schema.decision);
    o.q.resize(dims);
    for (int i = 1; i <= dims; ++i) {
      o.q[i - 1] = parse_number<double>(cells[q_columns[i]], row,
                                        schema.q_prefix + std::to_string(i));
    }
    if (obs.empty()) {
      x_lo = x_hi = o.x;
    } else {
      x_lo = std::min(x_lo, o.x);
      x_hi = std::max(x_hi, o.x);
    }
    max_d = std::max(max_d, o.decision);
    obs.push_back(std::move(o));
  }

  PanelMeta meta;
  meta.dims = dims;
  meta.n_choices = schema.n_choices.value_or(std::max(2, max_d + 1));
  if (schema.x_range) {
    meta.x_min = schema.x_range->first;
    meta.x_max = schema.x_range->second;
  } else {
    meta.x_min = x_lo;
    meta.x_max = x_hi;
  }
  return Panel(std::move(obs), meta);
}

Panel load_panel(const std::string& path, const PanelSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open panel file '" + path + "'");
  return read_panel(in, schema);
}

void write_panel(std::ostream& out, const Panel& panel) {
  std::string buf = "agent,period,x,d";
  for (int i = 1; i <= panel.dims(); ++i) buf += ",q" + std::to_string(i);
  buf += '\n';
  for (std::size_t r = 0; r < panel.size(); ++r) {
    buf += std::to_string(panel.agent_id(r));
    buf += ',';
    buf += std::to_string(panel.period(r));
    buf += ',';
    buf += std::to_string(panel.x(r));
    buf += ',';
    buf += std::to_string(panel.decision(r));
    for (double v : panel.q(r)) {
      buf += ',';
      append_double(buf, v);
    }
    buf += '\n';
    if (buf.size() > (1u << 20)) {
      out << buf;
      buf.clear();
    }
  }
  out << buf;
}

void save_panel(const std::string& path, const Panel& panel) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write panel file '" + path + "'");
  write_panel(out, panel);
}

std::pair<Panel, Panel> split_train_validation(const Panel& panel, double validation_fraction,
                                               std::uint64_t seed) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ArgumentError("validation fraction must lie in (0, 1)");
  }
  const std::size_t n = panel.n_agents();
  if (n < 2) throw ArgumentError("splitting requires at least 2 agents");
  auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {panel.select_agents(train), panel.select_agents(val)};
}

}  // namespace ddcpart
