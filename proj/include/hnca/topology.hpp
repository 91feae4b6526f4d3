#pragma once

#include <vector>

#include "hnca/core.hpp"

namespace hnca {

/// Explicit per-node DAG over integer node ids. Parent and child adjacencies
/// are kept mutually consistent; inputs are the nodes with no parents.
class Topology {
 public:
  static Topology from_parents(int num_nodes,
                               std::vector<std::vector<int>> parents);

  int size() const { return static_cast<int>(parents_.size()); }
  const std::vector<int>& parents(int node) const { return parents_[node]; }
  const std::vector<int>& children(int node) const { return children_[node]; }

  /// Node ids in a topological order. Throws SpecError on a cycle.
  std::vector<int> topological_order() const;

 private:
  std::vector<std::vector<int>> parents_;
  std::vector<std::vector<int>> children_;
};

/// Outcome of the parents-of-children-are-not-descendants check. When the
/// check fails, `node` is the first violating node in topological order and
/// `witness` is one member of B(C(node)) that is also a descendant of it.
struct Assumption1Result {
  bool ok = true;
  int node = -1;
  int witness = -1;
};

/// Verifies that for every node, no parent of one of its children is also a
/// descendant of it. Throws SpecError if the graph is cyclic, which is a
/// structural failure distinct from an assumption violation.
Assumption1Result validate_assumption1(const Topology& topology);

/// Materializes the layered DAG of a NetworkSpec: input nodes, one node per
/// Bernoulli unit, and a single softmax head node, in topological id order.
Topology layered_topology(const NetworkSpec& spec);

}  // namespace hnca
