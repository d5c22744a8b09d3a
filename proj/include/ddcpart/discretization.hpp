#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ddcpart {

// Axis-aligned binary tree over the covariate space. Leaves carry dense
// partition ids 0..k-1. An observation goes left iff q[dim] < threshold.
//
// Splitting leaf p keeps id p on the left child and gives the right child
// id k, so the tree after r splits is a prefix of every later tree and
// `truncated` can replay it.
class Discretization {
 public:
  struct Node {
    int dim = -1;  // 0-based; -1 for leaves
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int partition = -1;  // leaves only

    bool is_leaf() const { return dim < 0; }
  };

  struct Split {
    int partition;  // leaf that was split (keeps its id on the left)
    int dim;
    double threshold;
  };

  explicit Discretization(int dims = 0);

  int dims() const { return dims_; }
  int n_partitions() const { return static_cast<int>(leaf_node_.size()); }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::span<const Split> splits() const { return splits_; }

  // Partition id of the leaf containing q.
  int assign(std::span<const double> q) const;

  // Splits leaf `partition`; returns the id of the new right child.
  int split(int partition, int dim, double threshold);

  // The tree made of the first (max_partitions - 1) splits.
  Discretization truncated(int max_partitions) const;

  // Per-dimension bounds of a leaf inside [lower, upper): returns the
  // (lower, upper) pairs after intersecting with every ancestor split.
  std::vector<std::pair<double, double>> leaf_box(int partition, std::span<const double> lower,
                                                  std::span<const double> upper) const;

  // Number of splits on the path from the root to the leaf.
  int depth(int partition) const;

  // Text format, one node per line:
  //   ddcpart-discretization 1
  //   dims <D>
  //   nodes <n>
  //   <id> split <dim 1-based> <threshold> <left id> <right id>
  //   <id> leaf <partition>
  // Thresholds use shortest round-trip formatting, so parse(serialize(t))
  // reproduces t exactly.
  std::string serialize() const;
  static Discretization parse(std::string_view text);

  void save(const std::string& path) const;
  static Discretization load(const std::string& path);

  bool operator==(const Discretization& other) const;

 private:
  int dims_ = 0;
  std::vector<Node> nodes_;
  std::vector<int> leaf_node_;  // partition id -> node id
  std::vector<int> parent_;
  std::vector<Split> splits_;
};

}  // namespace ddcpart
