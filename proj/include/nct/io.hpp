#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nct/design.hpp"
#include "nct/estimator.hpp"
#include "nct/graph.hpp"
#include "nct/simlab.hpp"
#include "nct/tree.hpp"

namespace nct::io {

// Shared numeric formatting for CSV output: %.12g, deterministic.
std::string format_double(double v);

// Minimal CSV support: comma separators, double-quote quoting with ""
// escapes, LF or CRLF line ends, no embedded newlines inside fields.
// Every record must have the same field count as the header; ragged or
// malformed input throws SchemaError naming the line.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);
std::vector<std::vector<std::string>> read_csv(const std::string& path);

// Edge list `cluster,src,dst`.
std::vector<EdgeRow> read_edge_csv(const std::string& path);

// Node table `cluster,node,w,y,x_1..x_P` (P >= 0 covariate columns).
struct NodeTable {
  std::vector<NodeRef> nodes;
  std::vector<int> w;
  std::vector<double> y;
  std::vector<double> x;  // row-major, nodes.size() x n_covariates
  int n_covariates = 0;
};
NodeTable read_node_csv(const std::string& path);

// Per-unit marginal table `cluster,node,degree,pi_00,pi_10,pi_01,pi_11`.
void write_probs_csv(const std::string& path, const ProbabilityTable& probs);

// Joint-probability dump for selected unit pairs: one row per pair and
// condition cell, `cluster_a,node_a,cluster_b,node_b,wa,ga,wb,gb,pi`.
void write_pairs_csv(const std::string& path, const ProbabilityTable& probs,
                     std::span<const std::pair<int, int>> unit_pairs);

// Terminal-leaf estimates:
// `leaf_id,constraints,contrast,point,se,ci_low,ci_high,n_00,n_10,n_01,n_11`.
// Unavailable estimates leave point/se/ci fields empty.
void write_leaf_csv(const std::string& path, const CausalTree& tree);

void write_tree_json(const std::string& path, const CausalTree& tree);
CausalTree read_tree_json(const std::string& path);

// Aggregate metrics `effect,h,leaf,mean_est,mean_se,mse,bias,coverage`:
// one row per true rule (leaf = 1..R); a single leaf=0 row per effect when
// the scenario has no heterogeneous rules.
void write_metrics_csv(const std::string& path, const MetricsReport& report);

// Discovery means `criterion,h,mean_correct_rules`.
void write_discovery_csv(const std::string& path, const MetricsReport& report);

// Flat `key = value` manifest, loadable as a config file; the version
// string is recorded as a leading comment.
void write_manifest(const std::string& path,
                    std::span<const std::pair<std::string, std::string>> entries,
                    const std::string& version);

// Whole-file helpers.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace nct::io
