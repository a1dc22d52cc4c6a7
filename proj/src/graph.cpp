#include "nct/graph.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "nct/common.hpp"
#include "nct/rng.hpp"

namespace nct {

void ClusteredNetwork::finalize(std::vector<std::vector<int>>&& adj) {
  const int n = static_cast<int>(adj.size());
  adj_begin_.assign(static_cast<std::size_t>(n) + 1, 0);
  in_degree_.assign(static_cast<std::size_t>(n), 0);
  long total = 0;
  for (int u = 0; u < n; ++u) {
    std::sort(adj[u].begin(), adj[u].end());
    adj[u].erase(std::unique(adj[u].begin(), adj[u].end()), adj[u].end());
    total += static_cast<long>(adj[u].size());
  }
  adj_flat_.clear();
  adj_flat_.reserve(static_cast<std::size_t>(total));
  for (int u = 0; u < n; ++u) {
    adj_begin_[static_cast<std::size_t>(u)] = static_cast<int>(adj_flat_.size());
    for (int v : adj[u]) {
      adj_flat_.push_back(v);
      ++in_degree_[static_cast<std::size_t>(v)];
    }
  }
  adj_begin_[static_cast<std::size_t>(n)] = static_cast<int>(adj_flat_.size());
  unit_order_.resize(static_cast<std::size_t>(n));
  for (int u = 0; u < n; ++u) unit_order_[static_cast<std::size_t>(u)] = u;
}

ClusteredNetwork ClusteredNetwork::build_impl(const std::vector<EdgeRow>& rows,
                                              const std::vector<NodeRef>& roster,
                                              bool directed, BuildStats* stats) {
  // Index the roster: clusters and nodes in first-appearance order.
  std::vector<std::string> cluster_labels;
  std::vector<std::vector<std::string>> node_labels;
  std::unordered_map<std::string, int> cluster_index;
  std::vector<std::unordered_map<std::string, int>> node_index;

  auto add_cluster = [&](const std::string& c) -> int {
    auto it = cluster_index.find(c);
    if (it != cluster_index.end()) return it->second;
    const int k = static_cast<int>(cluster_labels.size());
    cluster_index.emplace(c, k);
    cluster_labels.push_back(c);
    node_labels.emplace_back();
    node_index.emplace_back();
    return k;
  };
  for (const NodeRef& r : roster) {
    const int k = add_cluster(r.cluster);
    if (node_index[static_cast<std::size_t>(k)].count(r.node) == 0) {
      node_index[static_cast<std::size_t>(k)].emplace(
          r.node, static_cast<int>(node_labels[static_cast<std::size_t>(k)].size()));
      node_labels[static_cast<std::size_t>(k)].push_back(r.node);
    }
  }

  const int n_clusters = static_cast<int>(cluster_labels.size());
  std::vector<int> cluster_first(static_cast<std::size_t>(n_clusters) + 1, 0);
  for (int k = 0; k < n_clusters; ++k) {
    cluster_first[static_cast<std::size_t>(k) + 1] =
        cluster_first[static_cast<std::size_t>(k)] +
        static_cast<int>(node_labels[static_cast<std::size_t>(k)].size());
  }
  const int n_units = cluster_first[static_cast<std::size_t>(n_clusters)];

  // Locate an edge endpoint, diagnosing roster violations: a node label known
  // in a different cluster is a cross-cluster reference; an entirely unknown
  // label (or cluster) is an unknown node.
  auto locate = [&](const std::string& cluster, const std::string& node) -> int {
    auto cit = cluster_index.find(cluster);
    if (cit == cluster_index.end()) {
      throw UnknownNode("edge references unknown cluster '" + cluster + "'");
    }
    const int k = cit->second;
    auto nit = node_index[static_cast<std::size_t>(k)].find(node);
    if (nit == node_index[static_cast<std::size_t>(k)].end()) {
      for (int other = 0; other < n_clusters; ++other) {
        if (other == k) continue;
        if (node_index[static_cast<std::size_t>(other)].count(node) != 0) {
          throw CrossClusterEdge("edge in cluster '" + cluster +
                                 "' references node '" + node +
                                 "' of cluster '" +
                                 cluster_labels[static_cast<std::size_t>(other)] +
                                 "'");
        }
      }
      throw UnknownNode("edge references unknown node '" + node +
                        "' in cluster '" + cluster + "'");
    }
    return cluster_first[static_cast<std::size_t>(k)] + nit->second;
  };

  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n_units));
  long duplicates = 0;
  auto add_edge = [&](int u, int v) {
    auto& row = adj[static_cast<std::size_t>(u)];
    if (std::find(row.begin(), row.end(), v) != row.end()) {
      ++duplicates;
      return;
    }
    row.push_back(v);
  };

  for (const EdgeRow& e : rows) {
    const int u = locate(e.cluster, e.src);
    const int v = locate(e.cluster, e.dst);
    if (u == v) {
      throw SelfLoop("self-loop on node '" + e.src + "' in cluster '" +
                     e.cluster + "'");
    }
    add_edge(u, v);
    if (!directed) add_edge(v, u);
  }
  if (stats != nullptr) stats->duplicate_edges = duplicates;

  ClusteredNetwork net;
  net.cluster_labels_ = std::move(cluster_labels);
  net.cluster_begin_ = std::move(cluster_first);
  net.node_labels_.reserve(static_cast<std::size_t>(n_units));
  net.cluster_of_.reserve(static_cast<std::size_t>(n_units));
  for (int k = 0; k < n_clusters; ++k) {
    for (std::string& label : node_labels[static_cast<std::size_t>(k)]) {
      net.node_labels_.push_back(std::move(label));
      net.cluster_of_.push_back(k);
    }
  }
  net.finalize(std::move(adj));
  return net;
}

ClusteredNetwork ClusteredNetwork::from_edge_list(const std::vector<EdgeRow>& rows,
                                                  bool directed,
                                                  BuildStats* stats) {
  // Implied roster: every endpoint, in first-appearance order.
  std::vector<NodeRef> roster;
  roster.reserve(rows.size() * 2);
  for (const EdgeRow& e : rows) {
    roster.push_back({e.cluster, e.src});
    roster.push_back({e.cluster, e.dst});
  }
  return build_impl(rows, roster, directed, stats);
}

ClusteredNetwork ClusteredNetwork::from_edge_list(const std::vector<EdgeRow>& rows,
                                                  const std::vector<NodeRef>& roster,
                                                  bool directed,
                                                  BuildStats* stats) {
  return build_impl(rows, roster, directed, stats);
}

namespace {

ClusteredNetwork generate_pairwise(int clusters, int cluster_size,
                                   const std::vector<std::uint8_t>* attribute,
                                   double p_base, double p_same,
                                   std::uint64_t seed,
                                   std::vector<EdgeRow>& rows,
                                   std::vector<NodeRef>& roster) {
  if (clusters < 1) throw Error("generator: clusters must be >= 1");
  if (cluster_size < 1) throw Error("generator: cluster_size must be >= 1");
  for (double p : {p_base, p_same}) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw InvalidProbability("generator: edge probability must lie in [0, 1]");
    }
  }
  const long n_total = static_cast<long>(clusters) * cluster_size;
  if (attribute != nullptr && static_cast<long>(attribute->size()) != n_total) {
    throw AttributeLengthMismatch(
        "generator: attribute length " + std::to_string(attribute->size()) +
        " does not match unit count " + std::to_string(n_total));
  }

  roster.reserve(static_cast<std::size_t>(n_total));
  for (int k = 0; k < clusters; ++k) {
    const std::string ck = std::to_string(k);
    for (int i = 0; i < cluster_size; ++i) {
      roster.push_back({ck, std::to_string(i)});
    }
    Rng rng(derive(seed, Stream::kNetwork, static_cast<std::uint64_t>(k)));
    for (int i = 0; i < cluster_size; ++i) {
      for (int j = i + 1; j < cluster_size; ++j) {
        double p = p_base;
        if (attribute != nullptr) {
          const std::size_t gi = static_cast<std::size_t>(k) *
                                     static_cast<std::size_t>(cluster_size) +
                                 static_cast<std::size_t>(i);
          const std::size_t gj = static_cast<std::size_t>(k) *
                                     static_cast<std::size_t>(cluster_size) +
                                 static_cast<std::size_t>(j);
          if ((*attribute)[gi] == (*attribute)[gj]) p = p_same;
        }
        if (rng.bernoulli(p)) {
          rows.push_back({ck, std::to_string(i), std::to_string(j)});
        }
      }
    }
  }
  // Undirected: from_edge_list inserts both directions.
  return ClusteredNetwork::from_edge_list(rows, roster, /*directed=*/false);
}

}  // namespace

ClusteredNetwork ClusteredNetwork::erdos_renyi(int clusters, int cluster_size,
                                               double edge_prob,
                                               std::uint64_t seed) {
  std::vector<EdgeRow> rows;
  std::vector<NodeRef> roster;
  return generate_pairwise(clusters, cluster_size, nullptr, edge_prob,
                           edge_prob, seed, rows, roster);
}

ClusteredNetwork ClusteredNetwork::homophilous(
    int clusters, int cluster_size, double p_base, double p_same,
    const std::vector<std::uint8_t>& attribute, std::uint64_t seed) {
  std::vector<EdgeRow> rows;
  std::vector<NodeRef> roster;
  return generate_pairwise(clusters, cluster_size, &attribute, p_base, p_same,
                           seed, rows, roster);
}

int ClusteredNetwork::find_unit(const std::string& cluster,
                                const std::string& node) const {
  for (int k = 0; k < n_clusters(); ++k) {
    if (cluster_labels_[static_cast<std::size_t>(k)] != cluster) continue;
    for (int u : cluster_units(k)) {
      if (node_labels_[static_cast<std::size_t>(u)] == node) return u;
    }
    throw UnknownNode("no node '" + node + "' in cluster '" + cluster + "'");
  }
  throw UnknownNode("no cluster '" + cluster + "'");
}

bool ClusteredNetwork::has_edge(int u, int v) const {
  const auto nb = out_neighbors(u);
  return std::binary_search(nb.begin(), nb.end(), v);
}

ClusteredNetwork::DropResult ClusteredNetwork::drop_isolated() const {
  const int n = n_units();
  std::vector<int> new_index(static_cast<std::size_t>(n), -1);
  DropResult result;
  for (int u = 0; u < n; ++u) {
    if (out_degree(u) + in_degree(u) == 0) {
      result.removed.push_back(u);
    } else {
      new_index[static_cast<std::size_t>(u)] =
          static_cast<int>(result.kept_old_index.size());
      result.kept_old_index.push_back(u);
    }
  }

  ClusteredNetwork net;
  std::vector<std::vector<int>> adj(result.kept_old_index.size());
  net.cluster_begin_.push_back(0);
  for (int k = 0; k < n_clusters(); ++k) {
    bool any = false;
    for (int u : cluster_units(k)) {
      const int nu = new_index[static_cast<std::size_t>(u)];
      if (nu < 0) continue;
      if (!any) {
        any = true;
        net.cluster_labels_.push_back(cluster_labels_[static_cast<std::size_t>(k)]);
      }
      net.node_labels_.push_back(node_labels_[static_cast<std::size_t>(u)]);
      net.cluster_of_.push_back(static_cast<int>(net.cluster_labels_.size()) - 1);
      auto& row = adj[static_cast<std::size_t>(nu)];
      for (int v : out_neighbors(u)) {
        row.push_back(new_index[static_cast<std::size_t>(v)]);
      }
    }
    if (any) {
      net.cluster_begin_.push_back(static_cast<int>(net.node_labels_.size()));
    }
  }
  net.finalize(std::move(adj));
  result.network = std::move(net);
  return result;
}

}  // namespace nct
