#include "hnca/topology.hpp"

#include <algorithm>
#include <queue>

namespace hnca {

Topology Topology::from_parents(int num_nodes,
                                std::vector<std::vector<int>> parents) {
  if (static_cast<int>(parents.size()) != num_nodes) {
    throw SpecError("parent adjacency size does not match node count");
  }
  Topology t;
  t.parents_ = std::move(parents);
  t.children_.assign(num_nodes, {});
  for (int node = 0; node < num_nodes; ++node) {
    for (int p : t.parents_[node]) {
      if (p < 0 || p >= num_nodes) throw SpecError("parent id out of range");
      t.children_[p].push_back(node);
    }
  }
  return t;
}

std::vector<int> Topology::topological_order() const {
  const int n = size();
  std::vector<int> indegree(n, 0);
  for (int node = 0; node < n; ++node) {
    indegree[node] = static_cast<int>(parents_[node].size());
  }
  std::queue<int> ready;
  for (int node = 0; node < n; ++node) {
    if (indegree[node] == 0) ready.push(node);
  }
  std::vector<int> order;
  order.reserve(n);
  while (!ready.empty()) {
    const int node = ready.front();
    ready.pop();
    order.push_back(node);
    for (int c : children_[node]) {
      if (--indegree[c] == 0) ready.push(c);
    }
  }
  if (static_cast<int>(order.size()) != n) {
    throw SpecError("graph contains a cycle");
  }
  return order;
}

Assumption1Result validate_assumption1(const Topology& topology) {
  const int n = topology.size();
  const std::vector<int> order = topology.topological_order();

  // descendants[v] over reverse topological order.
  std::vector<std::vector<bool>> descendants(n, std::vector<bool>(n, false));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int v = *it;
    for (int c : topology.children(v)) {
      descendants[v][c] = true;
      for (int w = 0; w < n; ++w) {
        if (descendants[c][w]) descendants[v][w] = true;
      }
    }
  }

  for (int v : order) {
    for (int c : topology.children(v)) {
      for (int p : topology.parents(c)) {
        if (p != v && descendants[v][p]) {
          return {false, v, p};
        }
      }
    }
  }
  return {};
}

Topology layered_topology(const NetworkSpec& spec) {
  spec.validate();
  std::vector<std::vector<int>> parents;
  int first_of_prev = 0;
  int prev_width = spec.input_dim;
  parents.assign(spec.input_dim, {});
  for (int width : spec.hidden_layers) {
    std::vector<int> prev(prev_width);
    for (int i = 0; i < prev_width; ++i) prev[i] = first_of_prev + i;
    for (int u = 0; u < width; ++u) parents.push_back(prev);
    first_of_prev += prev_width;
    prev_width = width;
  }
  std::vector<int> prev(prev_width);
  for (int i = 0; i < prev_width; ++i) prev[i] = first_of_prev + i;
  parents.push_back(prev);  // softmax head
  const int num_nodes = static_cast<int>(parents.size());
  return Topology::from_parents(num_nodes, std::move(parents));
}

}  // namespace hnca
