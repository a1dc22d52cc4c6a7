#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nct/design.hpp"
#include "nct/estimator.hpp"
#include "nct/graph.hpp"
#include "nct/tree.hpp"

namespace nct {

// Configuration of one synthetic-data setting.
struct ScenarioConfig {
  int scenario = 1;          // heterogeneity structure, 1 or 2
  double h = 1.1;            // effect size
  int clusters = 30;         // K
  int cluster_size = 100;    // n_k
  double edge_prob = 0.01;   // within-cluster link probability
  double alpha = 0.5;        // treatment probability
  int q = 1;                 // exposure threshold
  int covariates = 10;       // P
  double rho = 0.0;          // covariate equicorrelation, [0, 1)
  bool homophily = false;    // homophilous network on X1 instead of uniform
  double homophily_p_base = 0.005;
  double homophily_p_same = 0.02;
  int replications = 500;    // M
  std::uint64_t seed = 1;    // master seed

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// n x p binary covariate matrix (row-major, entries 0.0/1.0) with marginal
// probability 0.5 per column. Columns are equicorrelated via a thresholded
// Gaussian copula: the implied binary correlation is 2*arcsin(rho)/pi.
// Throws InvalidRho unless 0 <= rho < 1.
std::vector<double> correlated_binary_covariates(int n, int p, double rho,
                                                 std::uint64_t seed);

// One ground-truth heterogeneous rule: effect `value` inside `region`.
struct TrueRule {
  Leaf region;
  double value = 0.0;
};

// Scenario ground truth: rule sets and per-unit effect functions.
struct ScenarioTruth {
  std::vector<TrueRule> tau_rules;
  std::vector<TrueRule> delta_rules;

  double tau_at(std::span<const double> x) const;
  double delta_at(std::span<const double> x) const;
};

// Rule set for a scenario at effect size h (empty when h == 0).
ScenarioTruth scenario_truth(int scenario, double h);

// One generated replication: network (isolates removed), design
// probabilities, assembled dataset, and per-unit true effects.
struct SimulatedData {
  std::unique_ptr<ClusteredNetwork> network;
  std::unique_ptr<ProbabilityTable> probs;
  std::unique_ptr<Dataset> data;
  std::vector<double> true_tau;    // indexed by unit id in `network`
  std::vector<double> true_delta;  // indexed by unit id in `network`
  int isolated_removed = 0;
};

SimulatedData generate_scenario(const ScenarioConfig& config,
                                std::uint64_t replication_seed);

// ---------------------------------------------------------------------------
// Scoring

// Leaf-level estimate assigned to one unit by some estimator.
struct UnitEstimate {
  bool available = false;
  double point = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

// Maps a unit id to the estimate of its assigned leaf. Injection seam:
// tests can swap in an oracle that returns the truth exactly.
using EstimateProvider = std::function<UnitEstimate(int unit)>;

// Provider backed by a grown tree with estimation-sample leaf estimates.
EstimateProvider tree_estimate_provider(const CausalTree& tree,
                                        const Dataset& ds, Contrast contrast);

// Per-unit scoring of one effect over one sample of units. `truth` is
// indexed by unit id. Units whose estimate is unavailable are excluded
// and counted. Coverage uses closed intervals, so a degenerate interval
// [t, t] covers a truth of t.
struct EffectScore {
  long included = 0;
  long excluded = 0;
  long covered = 0;
  double bias_sum = 0.0;  // sum of (truth - estimate)
  double sq_sum = 0.0;    // sum of (truth - estimate)^2

  double bias() const { return included ? bias_sum / static_cast<double>(included) : 0.0; }
  double mse() const { return included ? sq_sum / static_cast<double>(included) : 0.0; }
  double coverage() const { return included ? static_cast<double>(covered) / static_cast<double>(included) : 0.0; }
};

EffectScore score_units(std::span<const int> units,
                        std::span<const double> truth,
                        const EstimateProvider& provider);

// Number of terminal leaves whose constraint set matches a true rule.
// Exact-set matching by default: same covariates, same sides, nothing
// extra. With allow_refinement, a leaf that refines a rule (rule's
// constraints plus extras) also counts, at most once per rule.
int count_correct_rules(const CausalTree& tree,
                        std::span<const TrueRule> rules,
                        bool allow_refinement = false);

// ---------------------------------------------------------------------------
// Replication driver

struct RunOptions {
  EstimandSet set;               // composite estimand set
  TreeParams tree;
  double train_fraction = 0.5;
  int jobs = 1;                  // worker count for run_replications
  bool refinement_matching = false;
};

// Per-rule aggregate over replications (main tree, estimation sample).
struct RuleMetrics {
  std::string rule;        // human-readable constraint set
  double true_value = 0.0;
  long detected = 0;       // replications that discovered the rule exactly
  long estimated = 0;      // of those, had an available leaf estimate
  double mean_est = 0.0;   // over `estimated` replications
  double mean_se = 0.0;
};

// Aggregate metrics for one effect (main tree, estimation sample).
// Bias, MSE, and coverage describe the estimator inside the correctly
// discovered leaves: every replication where a true rule's leaf appears in
// the main tree with an available estimate contributes that leaf's error
// (estimate minus true value), squared error, and CI hit, weighted by the
// leaf's estimation-sample size, and the sums are pooled across rules and
// replications.  Leaves the tree failed to discover contribute nothing.
struct EffectMetrics {
  std::string effect;      // "tau" or "delta"
  Contrast contrast;
  double bias = 0.0;       // pooled mean of (estimate - truth)
  double mse = 0.0;        // pooled mean squared error
  double coverage = 0.0;   // pooled CI coverage of the true leaf value
  long scored_reps = 0;    // replications with >=1 estimated rule leaf
  long excluded_units = 0; // units in discovered leaves lacking an estimate
  std::vector<RuleMetrics> rules;
};

// Mean correctly-discovered-rule counts for one splitting criterion.
struct DiscoveryStat {
  std::string criterion;   // "composite" or "single_<code>"
  double mean_overall = 0.0;      // against the union of all true rules
  double mean_tau_rules = 0.0;    // against the tau rule set
  double mean_delta_rules = 0.0;  // against the delta rule set
};

struct MetricsReport {
  ScenarioConfig config;
  std::vector<EffectMetrics> effects;    // tau then delta
  std::vector<DiscoveryStat> discovery;  // main criterion first
  int replications_completed = 0;
  int replications_failed = 0;
  std::vector<std::string> failure_messages;  // first few, for diagnostics
};

// Runs config.replications independent replications: generate, split
// clusters, grow one tree per criterion (composite plus one single-target
// tree per positive weight), estimate the first tree's leaves on the
// estimation clusters, and score the discovered leaves against the true
// rules. Results are a deterministic function of the config and options;
// the worker count never changes them.
MetricsReport run_replications(const ScenarioConfig& config,
                               const RunOptions& options);

// Single-threaded reference implementation with identical output.
MetricsReport run_replications_serial(const ScenarioConfig& config,
                                      const RunOptions& options);

// Default estimand set used by the simulation study: treatment and
// spillover contrasts with equal weights.
EstimandSet default_estimand_set();

}  // namespace nct
