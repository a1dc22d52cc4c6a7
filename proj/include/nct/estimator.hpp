#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nct/design.hpp"
#include "nct/graph.hpp"

namespace nct {

// An estimand: difference of mean potential outcomes between two exposure
// conditions, mu(hi) - mu(lo).
struct Contrast {
  CellCondition hi;
  CellCondition lo;
  friend bool operator==(Contrast a, Contrast b) {
    return a.hi == b.hi && a.lo == b.lo;
  }
};

// Canonical 4-digit code "w g w' g'", e.g. "1000" for (1,0) vs (0,0).
Contrast parse_contrast(const std::string& code);
std::string contrast_code(Contrast c);

// The five admissible contrasts: 1000 (treatment), 0100 (spillover),
// 1101, 1110, 1100.
const std::vector<Contrast>& admissible_contrasts();

// One subgroup: a conjunction of axis-aligned covariate constraints.
enum class Rel : std::uint8_t { LE, GT, EQ };

struct Constraint {
  int covariate = 0;  // zero-based column index
  Rel rel = Rel::LE;
  double cutoff = 0.0;
};

struct Leaf {
  std::vector<Constraint> constraints;  // empty = whole covariate space
  bool contains(std::span<const double> x) const;
  std::string to_string() const;  // e.g. "x1<=0.5 & x3>0.5"; "*" when empty
};

// Per-unit data bound to a network and its probability table.  Exposures G
// are always recomputed from (network, W, mapping), so they cannot disagree
// with the stored treatment vector.  Eligibility follows the positivity rule
// (out-degree >= q).
class Dataset {
 public:
  Dataset(const ClusteredNetwork& net, const ProbabilityTable& probs,
          std::vector<std::uint8_t> w, std::vector<double> y,
          std::vector<double> x, int n_covariates);

  const ClusteredNetwork& network() const { return *net_; }
  const ProbabilityTable& probs() const { return *probs_; }
  int n_units() const { return net_->n_units(); }
  int n_covariates() const { return n_covariates_; }

  std::uint8_t w(int u) const { return w_[static_cast<std::size_t>(u)]; }
  std::uint8_t g(int u) const { return g_[static_cast<std::size_t>(u)]; }
  double y(int u) const { return y_[static_cast<std::size_t>(u)]; }
  double x(int u, int p) const {
    return x_[static_cast<std::size_t>(u) * static_cast<std::size_t>(n_covariates_) +
              static_cast<std::size_t>(p)];
  }
  std::span<const double> x_row(int u) const {
    return {x_.data() + static_cast<std::size_t>(u) * static_cast<std::size_t>(n_covariates_),
            static_cast<std::size_t>(n_covariates_)};
  }
  CellCondition condition(int u) const {
    return {w_[static_cast<std::size_t>(u)], g_[static_cast<std::size_t>(u)]};
  }
  bool eligible(int u) const { return probs_->eligible(u); }

  // All eligible units, ascending.
  std::span<const int> eligible_units() const { return eligible_units_; }
  // Eligible units belonging to the given clusters.
  std::vector<int> eligible_units_in(std::span<const int> clusters) const;

 private:
  const ClusteredNetwork* net_;
  const ProbabilityTable* probs_;
  std::vector<std::uint8_t> w_, g_;
  std::vector<double> y_;
  std::vector<double> x_;
  int n_covariates_;
  std::vector<int> eligible_units_;
};

// Cell membership and Horvitz-Thompson sums of one leaf within a sample.
struct LeafSummary {
  long n_leaf = 0;                        // |leaf ∩ sample|
  std::array<long, kNumCells> count{};    // observed units per condition
  std::array<double, kNumCells> ht_sum{}; // sum of Y/pi per condition
  std::vector<int> members;               // the units, ascending
  std::vector<std::uint8_t> in_leaf;      // size n_units membership mask
};

LeafSummary summarize_leaf(const Dataset& ds, std::span<const int> sample,
                           const Leaf& leaf);

// Point estimate of mu(c) over leaf ∩ sample.  Throws EmptyCell when no
// sampled unit in the leaf is observed in condition c.
double leaf_mean(const Dataset& ds, std::span<const int> sample,
                 const Leaf& leaf, CellCondition c);

// Estimated variance of leaf_mean.  Throws EmptyCell like leaf_mean.
double leaf_mean_variance(const Dataset& ds, std::span<const int> sample,
                          const Leaf& leaf, CellCondition c);

// Estimated covariance between the two cell means of a contrast.
double effect_covariance(const Dataset& ds, std::span<const int> sample,
                         const Leaf& leaf, Contrast contrast);

struct EffectEstimate {
  Contrast contrast{};
  bool available = false;       // both contrast cells observed in the leaf
  double point = 0.0;
  double variance = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::array<long, kNumCells> n_cell{};  // per-condition observed counts
  long n_leaf = 0;
  bool variance_clamped = false;  // negative variance clamped to zero
  double max_mc_se = 0.0;         // largest Monte Carlo SE among pair probs used
};

// Contrast estimate with conservative variance and a normal CI at `level`.
EffectEstimate leaf_effect(const Dataset& ds, std::span<const int> sample,
                           const Leaf& leaf, Contrast contrast,
                           double level = 0.95);

// Central normal interval around `point`: point ± z_{(1+level)/2} * std_error.
// Throws InvalidLevel unless 0 < level < 1.
std::pair<double, double> confidence_interval(double point, double std_error,
                                              double level);

// Internal building blocks, exposed for tests and for incremental tree
// growth.  The *_sum functions return N(leaf)^2 times the corresponding
// estimator and never throw: an empty cell simply contributes zero.
struct WeightedSum {
  double value = 0.0;
  double max_mc_se = 0.0;
};
WeightedSum variance_sum(const Dataset& ds, const LeafSummary& summary,
                         CellCondition c);
WeightedSum covariance_sum(const Dataset& ds, const LeafSummary& summary,
                           Contrast contrast);

// Effect estimate computed from an existing summary (no throw; see
// EffectEstimate::available).
EffectEstimate effect_from_summary(const Dataset& ds, const LeafSummary& summary,
                                   Contrast contrast, double level);

}  // namespace nct
