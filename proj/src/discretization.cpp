#include "ddcpart/discretization.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "ddcpart/error.hpp"

namespace ddcpart {

Discretization::Discretization(int dims) : dims_(dims) {
  if (dims < 0) throw ArgumentError("negative dimension");
  nodes_.push_back(Node{-1, 0.0, -1, -1, 0});
  leaf_node_.push_back(0);
  parent_.push_back(-1);
}

int Discretization::assign(std::span<const double> q) const {
  if (static_cast<int>(q.size()) != dims_) {
    throw ValidationError("covariate vector has length " + std::to_string(q.size()) +
                          ", discretization expects " + std::to_string(dims_));
  }
  int n = 0;
  while (!nodes_[n].is_leaf()) {
    const Node& node = nodes_[n];
    n = q[node.dim] < node.threshold ? node.left : node.right;
  }
  return nodes_[n].partition;
}

int Discretization::split(int partition, int dim, double threshold) {
  if (partition < 0 || partition >= n_partitions()) throw ArgumentError("no such partition");
  if (dim < 0 || dim >= dims_) throw ArgumentError("split dimension out of range");
  const int node = leaf_node_[partition];
  const int new_id = n_partitions();
  const int left = static_cast<int>(nodes_.size());
  const int right = left + 1;
  nodes_.push_back(Node{-1, 0.0, -1, -1, partition});
  nodes_.push_back(Node{-1, 0.0, -1, -1, new_id});
  parent_.push_back(node);
  parent_.push_back(node);
  nodes_[node] = Node{dim, threshold, left, right, -1};
  leaf_node_[partition] = left;
  leaf_node_.push_back(right);
  splits_.push_back({partition, dim, threshold});
  return new_id;
}

Discretization Discretization::truncated(int max_partitions) const {
  Discretization t(dims_);
  const int n = std::clamp(max_partitions - 1, 0, static_cast<int>(splits_.size()));
  for (int r = 0; r < n; ++r) t.split(splits_[r].partition, splits_[r].dim, splits_[r].threshold);
  return t;
}

std::vector<std::pair<double, double>> Discretization::leaf_box(
    int partition, std::span<const double> lower, std::span<const double> upper) const {
  if (static_cast<int>(lower.size()) != dims_ || static_cast<int>(upper.size()) != dims_) {
    throw ArgumentError("domain bounds do not match dimension");
  }
  std::vector<std::pair<double, double>> box(dims_);
  for (int d = 0; d < dims_; ++d) box[d] = {lower[d], upper[d]};
  int child = leaf_node_.at(partition);
  for (int n = parent_[child]; n >= 0; child = n, n = parent_[n]) {
    const Node& node = nodes_[n];
    auto& [lo, hi] = box[node.dim];
    if (child == node.left) {
      hi = std::min(hi, node.threshold);
    } else {
      lo = std::max(lo, node.threshold);
    }
  }
  return box;
}

int Discretization::depth(int partition) const {
  int d = 0;
  for (int n = parent_[leaf_node_.at(partition)]; n >= 0; n = parent_[n]) ++d;
  return d;
}

std::string Discretization::serialize() const {
  std::string out = "ddcpart-discretization 1\n";
  out += "dims " + std::to_string(dims_) + "\n";
  out += "nodes " + std::to_string(nodes_.size()) + "\n";
  char buf[64];
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    out += std::to_string(i);
    if (n.is_leaf()) {
      out += " leaf " + std::to_string(n.partition) + "\n";
    } else {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, n.threshold);
      out += " split " + std::to_string(n.dim + 1) + " " + std::string(buf, ptr) + " " +
             std::to_string(n.left) + " " + std::to_string(n.right) + "\n";
    }
  }
  return out;
}

namespace {

template <typename T>
T read_token(std::istringstream& line, long row) {
  std::string tok;
  if (!(line >> tok)) throw ParseError("line " + std::to_string(row) + ": missing field", row);
  T v{};
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError("line " + std::to_string(row) + ": bad number '" + tok + "'", row);
  }
  return v;
}

}  // namespace

Discretization Discretization::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  long row = 0;
  auto next_line = [&]() -> std::istringstream {
    while (std::getline(in, line)) {
      ++row;
      if (!line.empty() && line[0] != '#') return std::istringstream(line);
    }
    throw ParseError("unexpected end of discretization text", row);
  };
  auto expect_word = [&](std::istringstream& ls, const char* word) {
    std::string w;
    if (!(ls >> w) || w != word) {
      throw ParseError("line " + std::to_string(row) + ": expected '" + word + "'", row);
    }
  };

  {
    auto ls = next_line();
    expect_word(ls, "ddcpart-discretization");
    if (read_token<int>(ls, row) != 1) throw ParseError("unsupported format version", row);
  }
  int dims = 0;
  {
    auto ls = next_line();
    expect_word(ls, "dims");
    dims = read_token<int>(ls, row);
  }
  std::size_t n_nodes = 0;
  {
    auto ls = next_line();
    expect_word(ls, "nodes");
    n_nodes = read_token<std::size_t>(ls, row);
  }
  if (n_nodes == 0 || n_nodes % 2 == 0) throw ParseError("node count must be odd", row);

  std::vector<Node> nodes(n_nodes);
  for (std::size_t i = 0; i < n_nodes; ++i) {
    auto ls = next_line();
    if (read_token<std::size_t>(ls, row) != i) {
      throw ParseError("line " + std::to_string(row) + ": node ids must be listed in order", row);
    }
    std::string kind;
    ls >> kind;
    if (kind == "leaf") {
      nodes[i].partition = read_token<int>(ls, row);
    } else if (kind == "split") {
      nodes[i].dim = read_token<int>(ls, row) - 1;
      nodes[i].threshold = read_token<double>(ls, row);
      nodes[i].left = read_token<int>(ls, row);
      nodes[i].right = read_token<int>(ls, row);
      if (nodes[i].dim < 0 || nodes[i].dim >= dims || nodes[i].left <= 0 ||
          nodes[i].right != nodes[i].left + 1 ||
          static_cast<std::size_t>(nodes[i].right) >= n_nodes) {
        throw ParseError("line " + std::to_string(row) + ": malformed split node", row);
      }
    } else {
      throw ParseError("line " + std::to_string(row) + ": unknown node kind '" + kind + "'", row);
    }
  }

  // Replay the splits in growth order (ordered by left child id); a split
  // node's partition at split time is the id of its leftmost leaf.
  std::vector<int> internal;
  for (std::size_t i = 0; i < n_nodes; ++i) {
    if (!nodes[i].is_leaf()) internal.push_back(static_cast<int>(i));
  }
  std::sort(internal.begin(), internal.end(),
            [&](int a, int b) { return nodes[a].left < nodes[b].left; });
  auto leftmost_partition = [&](int n) {
    std::size_t guard = 0;
    while (!nodes[n].is_leaf()) {
      n = nodes[n].left;
      if (++guard > n_nodes) throw ParseError("cycle in discretization tree", row);
    }
    return nodes[n].partition;
  };
  Discretization t(dims);
  for (int n : internal) t.split(leftmost_partition(n), nodes[n].dim, nodes[n].threshold);
  if (t.nodes_.size() != n_nodes) throw ParseError("tree is not a canonical growth order", row);
  for (std::size_t i = 0; i < n_nodes; ++i) {
    const Node& a = t.nodes_[i];
    const Node& b = nodes[i];
    if (a.dim != b.dim || a.left != b.left || a.right != b.right || a.partition != b.partition ||
        (a.dim >= 0 && a.threshold != b.threshold)) {
      throw ParseError("tree is not a canonical growth order", row);
    }
  }
  return t;
}

void Discretization::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write discretization file '" + path + "'");
  out << serialize();
}

Discretization Discretization::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open discretization file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool Discretization::operator==(const Discretization& other) const {
  if (dims_ != other.dims_ || splits_.size() != other.splits_.size()) return false;
  for (std::size_t i = 0; i < splits_.size(); ++i) {
    const Split& a = splits_[i];
    const Split& b = other.splits_[i];
    if (a.partition != b.partition || a.dim != b.dim || a.threshold != b.threshold) return false;
  }
  return true;
}

}  // namespace ddcpart
