#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nct/common.hpp"

namespace nct {

// One directed edge within a cluster, by textual ids.
struct EdgeRow {
  std::string cluster;
  std::string src;
  std::string dst;
};

// A (cluster, node) reference by textual ids.
struct NodeRef {
  std::string cluster;
  std::string node;
};

// A collection of disjoint clusters with directed within-cluster edges.
// Interference neighborhoods are out-neighborhoods.  Cross-cluster edges are
// structurally impossible: edges are validated at construction.
class ClusteredNetwork {
 public:
  struct BuildStats {
    long duplicate_edges = 0;  // duplicates are ignored, but counted
  };

  // Build from an edge list; the node roster is implied by the edges
  // (first-appearance order defines cluster and node numbering).
  // directed=false inserts both directions of every edge.
  static ClusteredNetwork from_edge_list(const std::vector<EdgeRow>& rows,
                                         bool directed,
                                         BuildStats* stats = nullptr);

  // Build from an edge list against an explicit node roster (so isolated
  // nodes survive).  Edges referencing nodes absent from the roster raise
  // UnknownNode.
  static ClusteredNetwork from_edge_list(const std::vector<EdgeRow>& rows,
                                         const std::vector<NodeRef>& roster,
                                         bool directed,
                                         BuildStats* stats = nullptr);

  // K independent Erdos-Renyi clusters of n nodes each; every unordered
  // pair receives an undirected edge independently with probability p.
  static ClusteredNetwork erdos_renyi(int clusters, int cluster_size,
                                      double edge_prob, std::uint64_t seed);

  // Same shape, but the pair probability depends on a binary node attribute:
  // p_same when the endpoints share the attribute value, p_base otherwise.
  // attribute.size() must equal clusters * cluster_size (row-major by
  // cluster).  With p_same == p_base this consumes randomness identically to
  // erdos_renyi, so seed-paired draws coincide exactly.
  static ClusteredNetwork homophilous(int clusters, int cluster_size,
                                      double p_base, double p_same,
                                      const std::vector<std::uint8_t>& attribute,
                                      std::uint64_t seed);

  int n_units() const { return static_cast<int>(cluster_of_.size()); }
  int n_clusters() const { return static_cast<int>(cluster_begin_.size()) - 1; }
  long n_edges() const { return static_cast<long>(adj_flat_.size()); }

  int cluster_of(int u) const { return cluster_of_[u]; }
  std::span<const int> out_neighbors(int u) const {
    return {adj_flat_.data() + adj_begin_[u],
            static_cast<std::size_t>(adj_begin_[u + 1] - adj_begin_[u])};
  }
  int out_degree(int u) const { return adj_begin_[u + 1] - adj_begin_[u]; }
  int in_degree(int u) const { return in_degree_[u]; }

  // Units of cluster k, contiguous ascending.
  std::span<const int> cluster_units(int k) const {
    return {unit_order_.data() + cluster_begin_[k],
            static_cast<std::size_t>(cluster_begin_[k + 1] - cluster_begin_[k])};
  }

  const std::string& cluster_label(int k) const { return cluster_labels_[k]; }
  const std::string& node_label(int u) const { return node_labels_[u]; }

  // Unit index by textual ids; throws UnknownNode.
  int find_unit(const std::string& cluster, const std::string& node) const;

  // True if the directed edge u -> v exists.
  bool has_edge(int u, int v) const;

  struct DropResult;  // defined after the class (it holds a network)
  // Remove units with no incident edges at all (out-degree and in-degree
  // both zero).  Such units have no interference role in either direction,
  // so the remaining structure is unchanged.  Empty clusters are removed.
  DropResult drop_isolated() const;

 private:
  ClusteredNetwork() = default;
  static ClusteredNetwork build_impl(const std::vector<EdgeRow>& rows,
                                     const std::vector<NodeRef>& roster,
                                     bool directed, BuildStats* stats);
  void finalize(std::vector<std::vector<int>>&& adj);

  // CSR adjacency over unit indices.
  std::vector<int> adj_flat_;
  std::vector<int> adj_begin_;
  std::vector<int> in_degree_;
  std::vector<int> cluster_of_;
  // Units grouped by cluster (unit indices are assigned so that clusters are
  // contiguous and ascending; unit_order_ is simply 0..N-1).
  std::vector<int> unit_order_;
  std::vector<int> cluster_begin_;
  std::vector<std::string> cluster_labels_;
  std::vector<std::string> node_labels_;
};

struct ClusteredNetwork::DropResult {
  ClusteredNetwork network;         // units with at least one edge
  std::vector<int> removed;         // old unit indices that were dropped
  std::vector<int> kept_old_index;  // new unit index -> old unit index
};

}  // namespace nct
