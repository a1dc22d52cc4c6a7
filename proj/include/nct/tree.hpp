#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nct/estimator.hpp"

namespace nct {

// The estimands of one analysis: contrasts plus composite-criterion weights.
// Contrasts with positive weight drive the splitting criterion (one positive
// weight = the single-contrast criterion, two or more = the composite
// criterion with gamma normalization); all listed contrasts are estimated in
// Phase 2 regardless of weight.
struct EstimandSet {
  std::vector<Contrast> contrasts;
  std::vector<double> weights;

  std::vector<std::size_t> target_indices() const;  // weights > 0
  void validate() const;
};

// Cluster-level honest split.
struct HonestSplit {
  std::vector<int> train_clusters;
  std::vector<int> est_clusters;
  std::uint64_t seed = 0;
};

HonestSplit split_clusters(const Dataset& ds, double fraction,
                           std::uint64_t seed);

struct TreeParams {
  int max_depth = 3;
  long min_size = 20;
  bool honest = true;
  double level = 0.95;     // confidence level for leaf estimates
  double min_gain = 1e-12; // strict-improvement threshold
};

struct SplitSpec {
  int covariate = 0;
  double cutoff = 0.0;
};

struct TreeNode {
  int id = 0;
  int depth = 0;
  Leaf region;
  std::optional<SplitSpec> split;
  int left = -1;
  int right = -1;

  // Training diagnostics (Phase 1).
  long n_train = 0;
  std::array<long, kNumCells> train_cells{};
  std::vector<EffectEstimate> train_estimates;  // per estimand contrast

  // Honest leaf payloads (Phase 2).
  std::vector<EffectEstimate> estimates;  // per estimand contrast

  bool is_terminal() const { return !split.has_value(); }
};

// Leaf statistics used by the splitting criterion.
struct LeafStat {
  long n_leaf = 0;
  double tau_hat = 0.0;
  double v_hat = 0.0;
};

// Q^in (honest=false) or Q^H (honest=true) from precomputed leaf statistics:
//   sum_l n_l * tau_l^2 / n_tr  -  honest * (1/n_tr + 1/n_est) * sum_l V_l.
double q_from_stats(std::span<const LeafStat> stats, bool honest, double n_tr,
                    double n_est);

// Single-contrast splitting criterion over an explicit partition, computed
// on the given training units.  Every leaf must satisfy the four-cell
// min-size rule (MinSizeViolated otherwise).
double q_single(const Dataset& ds, std::span<const int> train_units,
                std::span<const Leaf> partition, Contrast contrast,
                bool honest, double n_tr, double n_est, long min_size = 1);

// Composite criterion: sum_c gamma_c * q_single(.., c) with
// gamma_c = weight_c / (whole-training-sample estimate of c)^2, frozen at the
// root.  Throws ZeroRootEffect when normalization is undefined.
double q_composite(const Dataset& ds, std::span<const int> train_units,
                   std::span<const Leaf> partition, const EstimandSet& set,
                   bool honest, double n_tr, double n_est, long min_size = 1);

class CausalTree {
 public:
  // Phase 1: greedy growth on the training clusters.
  static CausalTree grow(const Dataset& ds, const HonestSplit& split,
                         const EstimandSet& set, const TreeParams& params);

  // Phase 2: honest estimation of every node on the estimation clusters.
  void estimate_leaves(const Dataset& ds, const HonestSplit& split);

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const EstimandSet& estimands() const { return estimands_; }
  const TreeParams& params() const { return params_; }

  std::vector<int> terminal_ids() const;
  int depth() const;

  // Terminal leaf holding x; throws MissingCovariate when x lacks a
  // covariate used on the path.  Boundary values route to the "<=" child.
  int predict_leaf(std::span<const double> x) const;

  // Stable-field-order JSON; round-trips losslessly through from_json.
  std::string to_json() const;
  static CausalTree from_json(const std::string& text);

  // Split structure only (covariate/cutoff tree shape), for honesty checks.
  std::string structure_signature() const;

 private:
  std::vector<TreeNode> nodes_;
  EstimandSet estimands_;
  TreeParams params_;
};

}  // namespace nct
