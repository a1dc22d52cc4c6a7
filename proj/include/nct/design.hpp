#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "nct/graph.hpp"

namespace nct {

// Joint exposure condition of one unit: own treatment w, neighborhood
// exposure g.  The four cells are indexed 00, 10, 01, 11 (w + 2*g).
struct CellCondition {
  std::uint8_t w = 0;
  std::uint8_t g = 0;
  friend bool operator==(CellCondition a, CellCondition b) {
    return a.w == b.w && a.g == b.g;
  }
};

inline constexpr int kNumCells = 4;
inline constexpr int cell_index(CellCondition c) { return c.w + 2 * c.g; }
inline constexpr std::array<CellCondition, kNumCells> kAllCells = {
    {{0, 0}, {1, 0}, {0, 1}, {1, 1}}};

// Neighborhood exposure: G = 1{ #treated out-neighbors >= q }.
struct ThresholdExposure {
  long q = 1;
};

// Exposures for a full treatment vector (one entry per unit).
std::vector<std::uint8_t> exposures(const ClusteredNetwork& net,
                                    std::span<const std::uint8_t> w,
                                    ThresholdExposure mapping);

// Independent Bernoulli(alpha) treatment assignment.
std::vector<std::uint8_t> assign_bernoulli(int n_units, double alpha,
                                           std::uint64_t seed);

// Marginal probability pi(w, g) of a unit with the given out-degree under
// Bernoulli(alpha) assignment and threshold-q exposure.  Throws
// PositivityViolation when the closed form is identically zero for the
// requested condition (degree < q with g = 1).
double marginal_probability(long degree, double alpha, long q, CellCondition c);

// Eligible units (out-degree >= q) and the excluded remainder.
struct PositivitySplit {
  std::vector<int> eligible;
  std::vector<int> excluded;
};
PositivitySplit positivity_filter(const ClusteredNetwork& net,
                                  ThresholdExposure mapping);

// True when the joint assignment-dependency sets {i} u N_i and {j} u N_j
// intersect (always false across clusters).
bool dependency_overlap(const ClusteredNetwork& net, int i, int j);

struct PairwiseOptions {
  // Exhaustive enumeration of the joint dependency set up to this size.
  int enum_limit = 25;
  // Monte Carlo draws when no closed form applies beyond the limit.
  long mc_draws = 100000;
  // Seed for the Monte Carlo fallback; each pair derives its own stream.
  std::uint64_t mc_seed = 0x6e63745f70616972ULL;
};

struct PairProbability {
  double value = 0.0;
  double mc_se = 0.0;  // nonzero only when estimated by Monte Carlo
};

// All marginal and pairwise exposure probabilities for one network under a
// Bernoulli(alpha) design with threshold-q exposure.  Marginals are
// precomputed (optionally with an OpenMP-parallel kernel); pairwise tables
// are computed on demand and cached per unordered pair.  The lazy pairwise
// cache is not thread-safe: share a table across threads only after warming
// it, or give each thread its own table.
class ProbabilityTable {
 public:
  ProbabilityTable(const ClusteredNetwork& net, double alpha,
                   ThresholdExposure mapping, PairwiseOptions options = {},
                   int jobs = 1);

  const ClusteredNetwork& network() const { return *net_; }
  double alpha() const { return alpha_; }
  long q() const { return mapping_.q; }
  ThresholdExposure mapping() const { return mapping_; }

  bool eligible(int u) const { return eligible_[static_cast<std::size_t>(u)] != 0; }

  // pi_u(c); 0 for conditions ruled out by positivity (no throw).
  double marginal(int u, CellCondition c) const {
    return marginals_[static_cast<std::size_t>(u) * kNumCells +
                      static_cast<std::size_t>(cell_index(c))];
  }

  // Joint probability that u is observed in cu and v in cv.
  PairProbability pairwise(int u, CellCondition cu, int v, CellCondition cv) const;

  // Same-cluster units j != u whose dependency set overlaps u's.
  std::span<const int> dependents(int u) const {
    return {dep_flat_.data() + dep_begin_[static_cast<std::size_t>(u)],
            static_cast<std::size_t>(dep_begin_[static_cast<std::size_t>(u) + 1] -
                                     dep_begin_[static_cast<std::size_t>(u)])};
  }

  long pairwise_cache_size() const { return static_cast<long>(pair_cache_.size()); }

  // Diagnostics for the dispatch paths (enumeration / closed form / MC).
  struct DispatchCounts {
    long product = 0;
    long enumeration = 0;
    long closed_form_q1 = 0;
    long monte_carlo = 0;
  };
  DispatchCounts dispatch_counts() const { return counts_; }

 private:
  struct PairTable {
    std::array<double, kNumCells * kNumCells> cell{};
    double mc_se = 0.0;
  };

  const PairTable& pair_table(int u, int v) const;  // u < v
  PairTable enumerate_pair(int u, int v) const;
  PairTable closed_form_q1_pair(int u, int v) const;
  PairTable monte_carlo_pair(int u, int v) const;

  void build_marginals_serial();
  void build_marginals_parallel(int jobs);
  void build_dependents();

  const ClusteredNetwork* net_;
  double alpha_;
  ThresholdExposure mapping_;
  PairwiseOptions options_;
  std::vector<double> marginals_;      // n_units x 4
  std::vector<std::uint8_t> eligible_;
  std::vector<int> dep_flat_;
  std::vector<int> dep_begin_;
  mutable std::unordered_map<std::uint64_t, PairTable> pair_cache_;
  mutable DispatchCounts counts_;
};

}  // namespace nct
