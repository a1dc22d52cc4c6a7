#include "nct/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <tuple>
#include <utility>

#include "nct/common.hpp"
#include "nct/rng.hpp"

namespace nct {

void ScenarioConfig::validate() const {
  if (scenario != 1 && scenario != 2) {
    throw ConfigError("scenario: must be 1 or 2, got " + std::to_string(scenario));
  }
  if (!(h >= 0.0) || !std::isfinite(h)) {
    throw ConfigError("h: must be finite and >= 0");
  }
  if (clusters < 1) throw ConfigError("clusters: must be >= 1");
  if (cluster_size < 1) throw ConfigError("cluster-size: must be >= 1");
  if (!(edge_prob >= 0.0 && edge_prob <= 1.0)) {
    throw ConfigError("edge-prob: must lie in [0, 1]");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("alpha: must lie strictly in (0, 1)");
  }
  if (q < 1) throw ConfigError("q: must be >= 1");
  const int min_p = scenario == 2 ? 3 : 2;
  if (covariates < min_p) {
    throw ConfigError("covariates: scenario " + std::to_string(scenario) +
                      " needs at least " + std::to_string(min_p));
  }
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("rho: must lie in [0, 1)");
  if (!(homophily_p_base >= 0.0 && homophily_p_base <= 1.0)) {
    throw ConfigError("homophily-p-base: must lie in [0, 1]");
  }
  if (!(homophily_p_same >= 0.0 && homophily_p_same <= 1.0)) {
    throw ConfigError("homophily-p-same: must lie in [0, 1]");
  }
  if (replications < 1) throw ConfigError("reps: must be >= 1");
}

std::vector<double> correlated_binary_covariates(int n, int p, double rho,
                                                 std::uint64_t seed) {
  if (n < 0 || p < 0) throw Error("covariate matrix dimensions must be >= 0");
  if (!(rho >= 0.0 && rho < 1.0)) {
    throw InvalidRho("rho must lie in [0, 1), got " + std::to_string(rho));
  }
  Rng rng(derive(seed, Stream::kCovariates));
  const double shared_coef = std::sqrt(rho);
  const double own_coef = std::sqrt(1.0 - rho);
  std::vector<double> x(static_cast<std::size_t>(n) * static_cast<std::size_t>(p));
  std::size_t at = 0;
  for (int i = 0; i < n; ++i) {
    const double shared = rng.normal();
    for (int j = 0; j < p; ++j) {
      const double z = shared_coef * shared + own_coef * rng.normal();
      x[at++] = z > 0.0 ? 1.0 : 0.0;
    }
  }
  return x;
}

namespace {

Leaf binary_region(std::initializer_list<std::pair<int, int>> literals) {
  Leaf leaf;
  for (const auto& [p, v] : literals) {
    leaf.constraints.push_back(Constraint{p, v == 0 ? Rel::LE : Rel::GT, 0.5});
  }
  return leaf;
}

}  // namespace

ScenarioTruth scenario_truth(int scenario, double h) {
  if (scenario != 1 && scenario != 2) {
    throw ConfigError("scenario: must be 1 or 2, got " + std::to_string(scenario));
  }
  ScenarioTruth t;
  if (h == 0.0) return t;  // null setting: no heterogeneous rules
  if (scenario == 1) {
    t.tau_rules = {TrueRule{binary_region({{0, 0}, {1, 0}}), h},
                   TrueRule{binary_region({{0, 1}, {1, 1}}), -h}};
    t.delta_rules = t.tau_rules;
  } else {
    t.tau_rules = {TrueRule{binary_region({{0, 0}, {1, 0}}), h},
                   TrueRule{binary_region({{0, 0}, {1, 1}}), 3.0 * h}};
    t.delta_rules = {TrueRule{binary_region({{0, 1}, {2, 0}}), h},
                     TrueRule{binary_region({{0, 1}, {2, 1}}), 3.0 * h}};
  }
  return t;
}

double ScenarioTruth::tau_at(std::span<const double> x) const {
  for (const TrueRule& r : tau_rules) {
    if (r.region.contains(x)) return r.value;
  }
  return 0.0;
}

double ScenarioTruth::delta_at(std::span<const double> x) const {
  for (const TrueRule& r : delta_rules) {
    if (r.region.contains(x)) return r.value;
  }
  return 0.0;
}

SimulatedData generate_scenario(const ScenarioConfig& config,
                                std::uint64_t replication_seed) {
  config.validate();
  const int k = config.clusters;
  const int n = config.cluster_size;
  const int p = config.covariates;
  const std::size_t total = static_cast<std::size_t>(k) * static_cast<std::size_t>(n);

  std::vector<double> x_full = correlated_binary_covariates(
      static_cast<int>(total), p, config.rho, replication_seed);

  ClusteredNetwork full = [&] {
    if (config.homophily) {
      std::vector<std::uint8_t> attr(total);
      for (std::size_t i = 0; i < total; ++i) {
        attr[i] = x_full[i * static_cast<std::size_t>(p)] > 0.5 ? 1 : 0;
      }
      return ClusteredNetwork::homophilous(k, n, config.homophily_p_base,
                                           config.homophily_p_same, attr,
                                           replication_seed);
    }
    return ClusteredNetwork::erdos_renyi(k, n, config.edge_prob,
                                         replication_seed);
  }();

  auto drop = full.drop_isolated();
  SimulatedData out;
  out.isolated_removed = static_cast<int>(drop.removed.size());
  out.network = std::make_unique<ClusteredNetwork>(std::move(drop.network));
  const ClusteredNetwork& net = *out.network;
  const int m = net.n_units();

  std::vector<double> x(static_cast<std::size_t>(m) * static_cast<std::size_t>(p));
  for (int u = 0; u < m; ++u) {
    const std::size_t old = static_cast<std::size_t>(drop.kept_old_index[static_cast<std::size_t>(u)]);
    std::copy_n(x_full.begin() + static_cast<std::ptrdiff_t>(old * static_cast<std::size_t>(p)),
                p, x.begin() + static_cast<std::ptrdiff_t>(u) * p);
  }

  const ScenarioTruth truth = scenario_truth(config.scenario, config.h);
  out.true_tau.resize(static_cast<std::size_t>(m));
  out.true_delta.resize(static_cast<std::size_t>(m));
  for (int u = 0; u < m; ++u) {
    const std::span<const double> row(x.data() + static_cast<std::size_t>(u) * static_cast<std::size_t>(p),
                                      static_cast<std::size_t>(p));
    out.true_tau[static_cast<std::size_t>(u)] = truth.tau_at(row);
    out.true_delta[static_cast<std::size_t>(u)] = truth.delta_at(row);
  }

  std::vector<std::uint8_t> w = assign_bernoulli(m, config.alpha, replication_seed);
  const ThresholdExposure mapping{config.q};
  const std::vector<std::uint8_t> g = exposures(net, w, mapping);

  Rng outcome_rng(derive(replication_seed, Stream::kOutcomes));
  std::vector<double> y(static_cast<std::size_t>(m));
  for (int u = 0; u < m; ++u) {
    const double y00 = outcome_rng.normal();
    const double y11 = outcome_rng.normal();
    const double y10 = y00 + out.true_tau[static_cast<std::size_t>(u)];
    const double y01 = y00 + out.true_delta[static_cast<std::size_t>(u)];
    const double observed = w[static_cast<std::size_t>(u)]
                                ? (g[static_cast<std::size_t>(u)] ? y11 : y10)
                                : (g[static_cast<std::size_t>(u)] ? y01 : y00);
    y[static_cast<std::size_t>(u)] = observed;
  }

  out.probs = std::make_unique<ProbabilityTable>(net, config.alpha, mapping);
  out.data = std::make_unique<Dataset>(net, *out.probs, std::move(w),
                                       std::move(y), std::move(x), p);
  return out;
}

EstimateProvider tree_estimate_provider(const CausalTree& tree,
                                        const Dataset& ds, Contrast contrast) {
  const auto& contrasts = tree.estimands().contrasts;
  std::size_t idx = contrasts.size();
  for (std::size_t i = 0; i < contrasts.size(); ++i) {
    if (contrasts[i] == contrast) {
      idx = i;
      break;
    }
  }
  if (idx == contrasts.size()) {
    throw Error("tree_estimate_provider: contrast " + contrast_code(contrast) +
                " is not estimated by this tree");
  }
  // The returned closure references the tree and dataset; both must
  // outlive it.
  return [&tree, &ds, idx](int unit) {
    UnitEstimate e;
    const int leaf = tree.predict_leaf(ds.x_row(unit));
    const TreeNode& node = tree.node(leaf);
    if (idx >= node.estimates.size()) return e;
    const EffectEstimate& est = node.estimates[idx];
    if (!est.available) return e;
    e.available = true;
    e.point = est.point;
    e.std_error = est.std_error;
    e.ci_low = est.ci_low;
    e.ci_high = est.ci_high;
    return e;
  };
}

EffectScore score_units(std::span<const int> units,
                        std::span<const double> truth,
                        const EstimateProvider& provider) {
  EffectScore s;
  for (int u : units) {
    const UnitEstimate e = provider(u);
    if (!e.available) {
      ++s.excluded;
      continue;
    }
    const double t = truth[static_cast<std::size_t>(u)];
    const double err = t - e.point;
    s.bias_sum += err;
    s.sq_sum += err * err;
    if (e.ci_low <= t && t <= e.ci_high) ++s.covered;
    ++s.included;
  }
  return s;
}

namespace {

// Binary-split signature of a region: covariate index -> required value.
// nullopt when the region is not expressible as a set of binary literals
// (non-(0,1) cutoff, equality constraint, or contradictory sides).
std::optional<std::map<int, int>> binary_signature(const Leaf& leaf) {
  std::map<int, int> sig;
  for (const Constraint& c : leaf.constraints) {
    if (c.rel == Rel::EQ) return std::nullopt;
    if (!(c.cutoff > 0.0 && c.cutoff < 1.0)) return std::nullopt;
    const int v = c.rel == Rel::GT ? 1 : 0;
    const auto [it, inserted] = sig.emplace(c.covariate, v);
    if (!inserted && it->second != v) return std::nullopt;
  }
  return sig;
}

std::optional<int> find_exact_rule_leaf(const CausalTree& tree,
                                        const std::map<int, int>& rule_sig) {
  for (int id : tree.terminal_ids()) {
    const auto leaf_sig = binary_signature(tree.node(id).region);
    if (leaf_sig && *leaf_sig == rule_sig) return id;
  }
  return std::nullopt;
}

}  // namespace

int count_correct_rules(const CausalTree& tree,
                        std::span<const TrueRule> rules,
                        bool allow_refinement) {
  if (rules.empty()) return 0;
  std::vector<std::map<int, int>> rule_sigs;
  rule_sigs.reserve(rules.size());
  for (const TrueRule& r : rules) {
    auto sig = binary_signature(r.region);
    if (!sig) {
      throw Error("count_correct_rules: rule " + r.region.to_string() +
                  " is not a binary constraint set");
    }
    rule_sigs.push_back(std::move(*sig));
  }
  std::vector<char> rule_matched(rule_sigs.size(), 0);
  int count = 0;
  for (int id : tree.terminal_ids()) {
    const auto leaf_sig = binary_signature(tree.node(id).region);
    if (!leaf_sig) continue;
    for (std::size_t r = 0; r < rule_sigs.size(); ++r) {
      bool match = false;
      if (allow_refinement) {
        match = !rule_matched[r] &&
                std::includes(leaf_sig->begin(), leaf_sig->end(),
                              rule_sigs[r].begin(), rule_sigs[r].end());
      } else {
        match = (*leaf_sig == rule_sigs[r]);
      }
      if (match) {
        rule_matched[r] = 1;
        ++count;
        break;
      }
    }
  }
  return count;
}

EstimandSet default_estimand_set() {
  EstimandSet set;
  set.contrasts = {parse_contrast("1000"), parse_contrast("0100")};
  set.weights = {0.5, 0.5};
  return set;
}

// ---------------------------------------------------------------------------
// Replication driver

namespace {

struct RepCriterion {
  int overall = 0;
  int tau = 0;
  int delta = 0;
};

struct RepRuleResult {
  bool detected = false;
  bool estimated = false;
  double est = 0.0;
  double se = 0.0;
  double err = 0.0;      // est - true rule value
  bool covered = false;  // CI brackets the true rule value
  long n_units = 0;      // estimation units in the discovered leaf
};

struct RepEffectResult {
  std::vector<RepRuleResult> rules;
};

struct RepResult {
  bool failed = false;
  std::string message;
  std::vector<RepCriterion> criteria;
  std::vector<RepEffectResult> effects;
};

struct ScoredEffect {
  std::string name;   // "tau" / "delta"
  Contrast contrast;
  int rule_list;      // 0 = tau rules, 1 = delta rules
};

RepResult run_one(const ScenarioConfig& config, const RunOptions& opt,
                  const ScenarioTruth& truth,
                  const std::vector<TrueRule>& union_rules,
                  const std::vector<std::pair<std::string, EstimandSet>>& criteria,
                  const std::vector<ScoredEffect>& scored, int rep_index) {
  RepResult result;
  try {
    const std::uint64_t rep_seed =
        derive(config.seed, Stream::kReplication, static_cast<std::uint64_t>(rep_index));
    SimulatedData sim = generate_scenario(config, rep_seed);
    const Dataset& ds = *sim.data;
    const HonestSplit split = split_clusters(ds, opt.train_fraction, rep_seed);

    std::vector<CausalTree> trees;
    trees.reserve(criteria.size());
    for (const auto& [name, set] : criteria) {
      (void)name;
      trees.push_back(CausalTree::grow(ds, split, set, opt.tree));
    }
    for (const CausalTree& tree : trees) {
      RepCriterion rc;
      rc.overall = count_correct_rules(tree, union_rules, opt.refinement_matching);
      rc.tau = count_correct_rules(tree, truth.tau_rules, opt.refinement_matching);
      rc.delta = count_correct_rules(tree, truth.delta_rules, opt.refinement_matching);
      result.criteria.push_back(rc);
    }

    CausalTree& main_tree = trees.front();
    main_tree.estimate_leaves(ds, split);

    const auto& main_contrasts = criteria.front().second.contrasts;
    for (const ScoredEffect& eff : scored) {
      RepEffectResult er;
      std::size_t contrast_idx = 0;
      for (std::size_t i = 0; i < main_contrasts.size(); ++i) {
        if (main_contrasts[i] == eff.contrast) contrast_idx = i;
      }
      const auto& rules = eff.rule_list == 0 ? truth.tau_rules : truth.delta_rules;
      for (const TrueRule& rule : rules) {
        RepRuleResult rr;
        const auto sig = binary_signature(rule.region);
        const auto leaf_id = find_exact_rule_leaf(main_tree, *sig);
        if (leaf_id) {
          rr.detected = true;
          const TreeNode& node = main_tree.node(*leaf_id);
          if (contrast_idx < node.estimates.size()) {
            const EffectEstimate& le = node.estimates[contrast_idx];
            rr.n_units = le.n_leaf;
            if (le.available) {
              rr.estimated = true;
              rr.est = le.point;
              rr.se = le.std_error;
              rr.err = le.point - rule.value;
              rr.covered = le.ci_low <= rule.value && rule.value <= le.ci_high;
            }
          }
        }
        er.rules.push_back(rr);
      }
      result.effects.push_back(er);
    }
  } catch (const std::exception& e) {
    result.failed = true;
    result.message = e.what();
    result.criteria.clear();
    result.effects.clear();
  }
  return result;
}

MetricsReport aggregate(const ScenarioConfig& config,
                        const ScenarioTruth& truth,
                        const std::vector<std::pair<std::string, EstimandSet>>& criteria,
                        const std::vector<ScoredEffect>& scored,
                        const std::vector<RepResult>& reps) {
  MetricsReport report;
  report.config = config;

  for (const RepResult& r : reps) {
    if (r.failed) {
      ++report.replications_failed;
      if (report.failure_messages.size() < 5) {
        report.failure_messages.push_back(r.message);
      }
    } else {
      ++report.replications_completed;
    }
  }
  const double m_done = std::max(1, report.replications_completed);

  for (std::size_t c = 0; c < criteria.size(); ++c) {
    DiscoveryStat d;
    d.criterion = criteria[c].first;
    double overall = 0.0, tau = 0.0, delta = 0.0;
    for (const RepResult& r : reps) {
      if (r.failed) continue;
      overall += r.criteria[c].overall;
      tau += r.criteria[c].tau;
      delta += r.criteria[c].delta;
    }
    d.mean_overall = overall / m_done;
    d.mean_tau_rules = tau / m_done;
    d.mean_delta_rules = delta / m_done;
    report.discovery.push_back(d);
  }

  for (std::size_t e = 0; e < scored.size(); ++e) {
    EffectMetrics em;
    em.effect = scored[e].name;
    em.contrast = scored[e].contrast;
    const auto& rules =
        scored[e].rule_list == 0 ? truth.tau_rules : truth.delta_rules;
    // Unit-weighted pools over discovered-and-estimated rule leaves.
    double err_sum = 0.0, sq_sum = 0.0, cov_sum = 0.0, weight = 0.0;
    std::vector<long> detected(rules.size(), 0), estimated(rules.size(), 0);
    std::vector<double> est_sum(rules.size(), 0.0), se_sum(rules.size(), 0.0);
    for (const RepResult& r : reps) {
      if (r.failed) continue;
      const RepEffectResult& er = r.effects[e];
      bool contributed = false;
      for (std::size_t ri = 0; ri < rules.size(); ++ri) {
        const RepRuleResult& rr = er.rules[ri];
        if (rr.detected) ++detected[ri];
        if (rr.estimated) {
          ++estimated[ri];
          est_sum[ri] += rr.est;
          se_sum[ri] += rr.se;
          const double w = static_cast<double>(rr.n_units);
          err_sum += w * rr.err;
          sq_sum += w * rr.err * rr.err;
          cov_sum += w * (rr.covered ? 1.0 : 0.0);
          weight += w;
          contributed = true;
        } else if (rr.detected) {
          em.excluded_units += rr.n_units;
        }
      }
      if (contributed) ++em.scored_reps;
    }
    if (weight > 0.0) {
      em.bias = err_sum / weight;
      em.mse = sq_sum / weight;
      em.coverage = cov_sum / weight;
    }
    for (std::size_t ri = 0; ri < rules.size(); ++ri) {
      RuleMetrics rm;
      rm.rule = rules[ri].region.to_string();
      rm.true_value = rules[ri].value;
      rm.detected = detected[ri];
      rm.estimated = estimated[ri];
      if (estimated[ri] > 0) {
        rm.mean_est = est_sum[ri] / static_cast<double>(estimated[ri]);
        rm.mean_se = se_sum[ri] / static_cast<double>(estimated[ri]);
      }
      em.rules.push_back(rm);
    }
    report.effects.push_back(em);
  }
  return report;
}

MetricsReport run_replications_impl(const ScenarioConfig& config,
                                    const RunOptions& opt, bool parallel) {
  config.validate();
  opt.set.validate();
  if (!(opt.train_fraction > 0.0 && opt.train_fraction < 1.0)) {
    throw ConfigError("train-fraction: must lie strictly in (0, 1)");
  }
  if (opt.jobs < 1) throw ConfigError("jobs: must be >= 1");

  const ScenarioTruth truth = scenario_truth(config.scenario, config.h);
  std::vector<TrueRule> union_rules = truth.tau_rules;
  for (const TrueRule& r : truth.delta_rules) {
    const auto sig = binary_signature(r.region);
    bool present = false;
    for (const TrueRule& u : union_rules) {
      if (binary_signature(u.region) == sig) present = true;
    }
    if (!present) union_rules.push_back(r);
  }

  std::vector<std::pair<std::string, EstimandSet>> criteria;
  const auto targets = opt.set.target_indices();
  if (targets.size() >= 2) criteria.emplace_back("composite", opt.set);
  for (std::size_t t : targets) {
    EstimandSet single = opt.set;
    std::fill(single.weights.begin(), single.weights.end(), 0.0);
    single.weights[t] = 1.0;
    criteria.emplace_back("single_" + contrast_code(opt.set.contrasts[t]), single);
  }

  std::vector<ScoredEffect> scored;
  const Contrast tau = parse_contrast("1000");
  const Contrast delta = parse_contrast("0100");
  for (const Contrast& c : opt.set.contrasts) {
    if (c == tau) scored.push_back(ScoredEffect{"tau", tau, 0});
  }
  for (const Contrast& c : opt.set.contrasts) {
    if (c == delta) scored.push_back(ScoredEffect{"delta", delta, 1});
  }

  std::vector<RepResult> reps(static_cast<std::size_t>(config.replications));
  const int m_total = config.replications;
#ifdef _OPENMP
  if (parallel && opt.jobs > 1) {
#pragma omp parallel for schedule(dynamic) num_threads(opt.jobs)
    for (int m = 0; m < m_total; ++m) {
      reps[static_cast<std::size_t>(m)] =
          run_one(config, opt, truth, union_rules, criteria, scored, m);
    }
  } else {
    for (int m = 0; m < m_total; ++m) {
      reps[static_cast<std::size_t>(m)] =
          run_one(config, opt, truth, union_rules, criteria, scored, m);
    }
  }
#else
  (void)parallel;
  for (int m = 0; m < m_total; ++m) {
    reps[static_cast<std::size_t>(m)] =
        run_one(config, opt, truth, union_rules, criteria, scored, m);
  }
#endif
  return aggregate(config, truth, criteria, scored, reps);
}

}  // namespace

MetricsReport run_replications(const ScenarioConfig& config,
                               const RunOptions& options) {
  return run_replications_impl(config, options, true);
}

MetricsReport run_replications_serial(const ScenarioConfig& config,
                                      const RunOptions& options) {
  return run_replications_impl(config, options, false);
}

}  // namespace nct
