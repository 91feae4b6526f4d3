#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hnca/topology.hpp"

using namespace hnca;

namespace {

NetworkSpec layered_spec(int input_dim, std::vector<int> hidden, int classes) {
  NetworkSpec spec;
  spec.input_dim = input_dim;
  spec.hidden_layers = std::move(hidden);
  spec.num_classes = classes;
  return spec;
}

}  // namespace

TEST_CASE("layered topologies satisfy the assumption") {
  for (const auto& hidden :
       std::vector<std::vector<int>>{{4}, {4, 3}, {2, 2, 2}, {}}) {
    Topology t = layered_topology(layered_spec(3, hidden, 2));
    const Assumption1Result r = validate_assumption1(t);
    CHECK(r.ok);
  }
}

TEST_CASE("single chain is accepted") {
  Topology t = Topology::from_parents(3, {{}, {0}, {1}});
  CHECK(validate_assumption1(t).ok);
}

TEST_CASE("triangle violates at the apex with the middle as witness") {
  // A->B, B->C, A->C: B is a parent of A's child C and also A's descendant.
  Topology t = Topology::from_parents(3, {{}, {0}, {0, 1}});
  const Assumption1Result r = validate_assumption1(t);
  CHECK_FALSE(r.ok);
  CHECK(r.node == 0);
  CHECK(r.witness == 1);
}

TEST_CASE("cycle is a structural error, not a violation") {
  Topology t = Topology::from_parents(3, {{2}, {0}, {1}});
  CHECK_THROWS_AS(validate_assumption1(t), SpecError);
}

TEST_CASE("skip edges bypassing one layer always violate") {
  // 2 inputs, two hidden layers of 2, head. Ids: in 0-1, h1 2-3, h2 4-5,
  // head 6.
  const NetworkSpec spec = layered_spec(2, {2, 2}, 2);
  Topology base = layered_topology(spec);
  CHECK(validate_assumption1(base).ok);

  // input -> second hidden layer
  for (int from : {0, 1}) {
    for (int to : {4, 5}) {
      std::vector<std::vector<int>> parents;
      for (int v = 0; v < base.size(); ++v) parents.push_back(base.parents(v));
      parents[to].push_back(from);
      Topology skip = Topology::from_parents(base.size(), parents);
      CHECK_FALSE(validate_assumption1(skip).ok);
    }
  }
  // first hidden layer -> head
  for (int from : {2, 3}) {
    std::vector<std::vector<int>> parents;
    for (int v = 0; v < base.size(); ++v) parents.push_back(base.parents(v));
    parents[6].push_back(from);
    Topology skip = Topology::from_parents(base.size(), parents);
    CHECK_FALSE(validate_assumption1(skip).ok);
  }
}

TEST_CASE("mutually consistent adjacency and ids") {
  Topology t = layered_topology(layered_spec(2, {3}, 2));
  CHECK(t.size() == 2 + 3 + 1);
  // children of inputs are exactly the hidden units
  for (int in = 0; in < 2; ++in) {
    CHECK(t.children(in) == std::vector<int>{2, 3, 4});
  }
  // head parents are the hidden units
  CHECK(t.parents(5) == std::vector<int>{2, 3, 4});
  CHECK_THROWS_AS(Topology::from_parents(2, {{}, {5}}), SpecError);
}
