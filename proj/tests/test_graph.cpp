#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "nct/common.hpp"
#include "nct/graph.hpp"

using nct::ClusteredNetwork;
using nct::EdgeRow;
using nct::NodeRef;

TEST_CASE("empty edge list gives an empty network") {
  const auto net = ClusteredNetwork::from_edge_list({}, true);
  CHECK(net.n_units() == 0);
  CHECK(net.n_clusters() == 0);
  CHECK(net.n_edges() == 0);
}

TEST_CASE("single directed edge") {
  const auto net = ClusteredNetwork::from_edge_list({{"1", "a", "b"}}, true);
  REQUIRE(net.n_units() == 2);
  const int a = net.find_unit("1", "a");
  const int b = net.find_unit("1", "b");
  CHECK(net.out_degree(a) == 1);
  CHECK(net.out_neighbors(a)[0] == b);
  CHECK(net.out_degree(b) == 0);
  CHECK(net.in_degree(b) == 1);
  CHECK(net.has_edge(a, b));
  CHECK_FALSE(net.has_edge(b, a));
}

TEST_CASE("path plus triangle fixture has hand-counted degrees") {
  const std::vector<EdgeRow> rows = {
      {"1", "a", "b"}, {"1", "b", "c"},                    // path a-b-c
      {"2", "u", "v"}, {"2", "v", "w"}, {"2", "w", "u"}};  // triangle
  const auto net = ClusteredNetwork::from_edge_list(rows, false);
  REQUIRE(net.n_units() == 6);
  REQUIRE(net.n_clusters() == 2);
  CHECK(net.out_degree(net.find_unit("1", "a")) == 1);
  CHECK(net.out_degree(net.find_unit("1", "b")) == 2);
  CHECK(net.out_degree(net.find_unit("1", "c")) == 1);
  for (const char* v : {"u", "v", "w"}) {
    CHECK(net.out_degree(net.find_unit("2", v)) == 2);
  }
}

TEST_CASE("construction errors") {
  CHECK_THROWS_AS(ClusteredNetwork::from_edge_list({{"1", "a", "a"}}, true),
                  nct::SelfLoop);
  // A roster pins node "b" to cluster 2; an edge from cluster 1 to it crosses.
  const std::vector<NodeRef> roster = {{"1", "a"}, {"2", "b"}};
  CHECK_THROWS_AS(
      ClusteredNetwork::from_edge_list({{"1", "a", "b"}}, roster, true),
      nct::CrossClusterEdge);
  // Unknown node when a roster is provided.
  const std::vector<NodeRef> tiny = {{"1", "a"}};
  CHECK_THROWS_AS(ClusteredNetwork::from_edge_list({{"1", "a", "z"}}, tiny, true),
                  nct::UnknownNode);
}

TEST_CASE("duplicate edges are kept once and counted") {
  ClusteredNetwork::BuildStats stats;
  const auto net = ClusteredNetwork::from_edge_list(
      {{"1", "a", "b"}, {"1", "a", "b"}, {"1", "b", "c"}}, true, &stats);
  CHECK(stats.duplicate_edges == 1);
  CHECK(net.n_edges() == 2);
  CHECK(net.out_degree(net.find_unit("1", "a")) == 1);
}

TEST_CASE("no cross-cluster edges exist in generated networks") {
  const auto net = ClusteredNetwork::erdos_renyi(4, 20, 0.3, 99);
  for (int u = 0; u < net.n_units(); ++u) {
    for (int v : net.out_neighbors(u)) {
      CHECK(net.cluster_of(u) == net.cluster_of(v));
    }
  }
}

TEST_CASE("erdos_renyi extremes") {
  const auto empty = ClusteredNetwork::erdos_renyi(2, 3, 0.0, 1);
  CHECK(empty.n_units() == 6);
  CHECK(empty.n_edges() == 0);

  const auto full = ClusteredNetwork::erdos_renyi(1, 3, 1.0, 1);
  CHECK(full.n_units() == 3);
  CHECK(full.n_edges() == 6);  // triangle, stored in both directions
  for (int u = 0; u < 3; ++u) CHECK(full.out_degree(u) == 2);

  CHECK_THROWS_AS(ClusteredNetwork::erdos_renyi(1, 3, 1.5, 1),
                  nct::InvalidProbability);
}

TEST_CASE("erdos_renyi is deterministic per seed") {
  const auto a = ClusteredNetwork::erdos_renyi(3, 30, 0.1, 12345);
  const auto b = ClusteredNetwork::erdos_renyi(3, 30, 0.1, 12345);
  REQUIRE(a.n_units() == b.n_units());
  REQUIRE(a.n_edges() == b.n_edges());
  for (int u = 0; u < a.n_units(); ++u) {
    const auto na = a.out_neighbors(u);
    const auto nb = b.out_neighbors(u);
    REQUIRE(na.size() == nb.size());
    CHECK(std::equal(na.begin(), na.end(), nb.begin()));
  }
  const auto c = ClusteredNetwork::erdos_renyi(3, 30, 0.1, 54321);
  CHECK(c.n_edges() != a.n_edges());  // overwhelmingly likely
}

TEST_CASE("erdos_renyi mean degree matches p(n-1) over many replications") {
  double degree_sum = 0.0;
  long unit_count = 0;
  for (int rep = 0; rep < 500; ++rep) {
    const auto net = ClusteredNetwork::erdos_renyi(
        30, 100, 0.01, 1000 + static_cast<std::uint64_t>(rep));
    for (int u = 0; u < net.n_units(); ++u) degree_sum += net.out_degree(u);
    unit_count += net.n_units();
  }
  CHECK(degree_sum / static_cast<double>(unit_count) ==
        doctest::Approx(0.99).epsilon(1e-30).scale(1e30 * 0.05));
}

TEST_CASE("homophilous with equal probabilities reproduces erdos_renyi") {
  const int clusters = 3, n = 40;
  std::vector<std::uint8_t> attr(static_cast<std::size_t>(clusters * n));
  for (std::size_t i = 0; i < attr.size(); ++i) attr[i] = i % 2;
  const auto er = ClusteredNetwork::erdos_renyi(clusters, n, 0.05, 777);
  const auto ho =
      ClusteredNetwork::homophilous(clusters, n, 0.05, 0.05, attr, 777);
  REQUIRE(er.n_units() == ho.n_units());
  REQUIRE(er.n_edges() == ho.n_edges());
  for (int u = 0; u < er.n_units(); ++u) {
    const auto na = er.out_neighbors(u);
    const auto nb = ho.out_neighbors(u);
    REQUIRE(na.size() == nb.size());
    CHECK(std::equal(na.begin(), na.end(), nb.begin()));
  }
}

TEST_CASE("homophilous extremes connect exactly the matching pairs") {
  const int n = 10;
  std::vector<std::uint8_t> attr(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) attr[static_cast<std::size_t>(i)] = i < 5 ? 1 : 0;
  const auto net = ClusteredNetwork::homophilous(1, n, 0.0, 1.0, attr, 5);
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      if (u == v) continue;
      CHECK(net.has_edge(u, v) ==
            (attr[static_cast<std::size_t>(u)] == attr[static_cast<std::size_t>(v)]));
    }
  }
  CHECK_THROWS_AS(ClusteredNetwork::homophilous(1, 4, -0.1, 0.5,
                                                {0, 1, 0, 1}, 5),
                  nct::InvalidProbability);
  CHECK_THROWS_AS(ClusteredNetwork::homophilous(1, 4, 0.1, 1.5,
                                                {0, 1, 0, 1}, 5),
                  nct::InvalidProbability);
  CHECK_THROWS_AS(ClusteredNetwork::homophilous(1, 4, 0.1, 0.5, {0, 1}, 5),
                  nct::AttributeLengthMismatch);
}

TEST_CASE("homophily favors same-attribute edges") {
  double same_fraction_sum = 0.0;
  int reps = 200;
  for (int rep = 0; rep < reps; ++rep) {
    std::vector<std::uint8_t> attr(100);
    nct::Rng rng(nct::derive(42, nct::Stream::kCovariates,
                             static_cast<std::uint64_t>(rep)));
    for (auto& a : attr) a = rng.bernoulli(0.5) ? 1 : 0;
    const auto net = ClusteredNetwork::homophilous(
        1, 100, 0.005, 0.02, attr, 9000 + static_cast<std::uint64_t>(rep));
    long same = 0, total = 0;
    for (int u = 0; u < net.n_units(); ++u) {
      for (int v : net.out_neighbors(u)) {
        if (v > u) {
          ++total;
          if (attr[static_cast<std::size_t>(u)] ==
              attr[static_cast<std::size_t>(v)]) {
            ++same;
          }
        }
      }
    }
    if (total > 0) {
      same_fraction_sum += static_cast<double>(same) / static_cast<double>(total);
    }
  }
  CHECK(same_fraction_sum / reps > 0.5);
}

TEST_CASE("drop_isolated removes exactly the edgeless units") {
  // No isolates: identity.
  const auto tri = ClusteredNetwork::erdos_renyi(1, 3, 1.0, 1);
  const auto kept = tri.drop_isolated();
  CHECK(kept.removed.empty());
  CHECK(kept.network.n_units() == 3);
  CHECK(kept.network.n_edges() == tri.n_edges());

  // 3 nodes, 1 edge: one unit dropped.
  const std::vector<NodeRef> roster = {{"1", "a"}, {"1", "b"}, {"1", "c"}};
  const auto net =
      ClusteredNetwork::from_edge_list({{"1", "a", "b"}}, roster, false);
  const auto dropped = net.drop_isolated();
  CHECK(dropped.network.n_units() == 2);
  REQUIRE(dropped.removed.size() == 1);
  CHECK(net.node_label(dropped.removed[0]) == "c");
  REQUIRE(dropped.kept_old_index.size() == 2);
  CHECK(net.node_label(dropped.kept_old_index[0]) == "a");
  CHECK(net.node_label(dropped.kept_old_index[1]) == "b");

  // Idempotence.
  const auto twice = dropped.network.drop_isolated();
  CHECK(twice.removed.empty());
  CHECK(twice.network.n_units() == dropped.network.n_units());
}

TEST_CASE("drop_isolated count on sparse random graphs matches theory") {
  // E[isolated] = 100 * (0.99)^99 ~ 36.97 per cluster.
  double removed_sum = 0.0;
  const int reps = 200;
  for (int rep = 0; rep < reps; ++rep) {
    const auto net = ClusteredNetwork::erdos_renyi(
        1, 100, 0.01, 500 + static_cast<std::uint64_t>(rep));
    removed_sum += static_cast<double>(net.drop_isolated().removed.size());
  }
  CHECK(removed_sum / reps == doctest::Approx(36.97).epsilon(1e-30).scale(1e30 * 6.0));
}

TEST_CASE("labels and lookups survive construction and drop") {
  const auto net = fixtures::path_network(4, "17");
  CHECK(net.cluster_label(0) == "17");
  CHECK(net.node_label(net.find_unit("17", "2")) == "2");
  CHECK_THROWS_AS(net.find_unit("17", "nope"), nct::UnknownNode);
  CHECK_THROWS_AS(net.find_unit("99", "2"), nct::UnknownNode);
}
