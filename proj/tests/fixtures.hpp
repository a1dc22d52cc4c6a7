#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "nct/design.hpp"
#include "nct/estimator.hpp"
#include "nct/graph.hpp"
#include "nct/rng.hpp"

namespace fixtures {

// Undirected path a-b-c-... within one cluster.
inline nct::ClusteredNetwork path_network(int n, const std::string& cluster = "1") {
  std::vector<nct::EdgeRow> rows;
  std::vector<nct::NodeRef> roster;
  for (int i = 0; i < n; ++i) roster.push_back({cluster, std::to_string(i)});
  for (int i = 0; i + 1 < n; ++i) {
    rows.push_back({cluster, std::to_string(i), std::to_string(i + 1)});
  }
  return nct::ClusteredNetwork::from_edge_list(rows, roster, /*directed=*/false);
}

// A small random test network: every cluster is an undirected cycle (all
// degrees >= 2) plus a few chords.  Deterministic per seed.
inline nct::ClusteredNetwork random_network(int clusters, int cluster_size,
                                            std::uint64_t seed,
                                            double chord_prob = 0.3) {
  nct::Rng rng(nct::derive(seed, nct::Stream::kNetwork));
  std::vector<nct::EdgeRow> rows;
  std::vector<nct::NodeRef> roster;
  for (int k = 0; k < clusters; ++k) {
    const std::string cl = std::to_string(k + 1);
    for (int i = 0; i < cluster_size; ++i) {
      roster.push_back({cl, std::to_string(i)});
    }
    for (int i = 0; i < cluster_size; ++i) {
      const int j = (i + 1) % cluster_size;
      if (j != i) rows.push_back({cl, std::to_string(i), std::to_string(j)});
    }
    for (int i = 0; i < cluster_size; ++i) {
      for (int j = i + 2; j < cluster_size; ++j) {
        if (i == 0 && j == cluster_size - 1) continue;  // cycle edge already
        if (rng.bernoulli(chord_prob)) {
          rows.push_back({cl, std::to_string(i), std::to_string(j)});
        }
      }
    }
  }
  return nct::ClusteredNetwork::from_edge_list(rows, roster, /*directed=*/false);
}

// Potential-outcome table: one row per unit, columns indexed by cell.
using PoTable = std::vector<std::array<double, nct::kNumCells>>;

inline PoTable random_po_table(int n, std::uint64_t seed) {
  nct::Rng rng(nct::derive(seed, nct::Stream::kOutcomes));
  PoTable table(static_cast<std::size_t>(n));
  for (auto& row : table) {
    for (double& v : row) v = rng.uniform(-2.0, 2.0);
  }
  return table;
}

inline std::vector<double> observed_outcomes(const PoTable& table,
                                             std::span<const std::uint8_t> w,
                                             std::span<const std::uint8_t> g) {
  std::vector<double> y(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    y[i] = table[i][static_cast<std::size_t>(
        nct::cell_index({w[i], g[i]}))];
  }
  return y;
}

// Dataset over a network with a fixed potential-outcome table and the given
// realized treatment vector.  Covariate matrix is supplied row-major.
inline nct::Dataset make_dataset(const nct::ClusteredNetwork& net,
                                 const nct::ProbabilityTable& probs,
                                 const PoTable& table,
                                 std::vector<std::uint8_t> w,
                                 std::vector<double> x, int n_covariates) {
  const auto g = nct::exposures(net, w, probs.mapping());
  auto y = observed_outcomes(table, w, g);
  return nct::Dataset(net, probs, std::move(w), std::move(y), std::move(x),
                      n_covariates);
}

// Constant covariate matrix (all zeros) with one column.
inline std::vector<double> zero_covariates(int n) {
  return std::vector<double>(static_cast<std::size_t>(n), 0.0);
}

}  // namespace fixtures
