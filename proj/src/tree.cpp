#include "nct/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "nct/common.hpp"
#include "nct/rng.hpp"

namespace nct {

using ordered_json = nlohmann::ordered_json;

std::vector<std::size_t> EstimandSet::target_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] > 0.0) idx.push_back(i);
  }
  return idx;
}

void EstimandSet::validate() const {
  if (contrasts.empty()) throw Error("estimand set: no contrasts");
  if (contrasts.size() != weights.size()) {
    throw Error("estimand set: contrasts and weights differ in length");
  }
  const auto& admissible = admissible_contrasts();
  for (std::size_t i = 0; i < contrasts.size(); ++i) {
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) {
      throw Error("estimand set: weights must be finite and >= 0");
    }
    if (std::find(admissible.begin(), admissible.end(), contrasts[i]) ==
        admissible.end()) {
      throw Error("estimand set: contrast " + contrast_code(contrasts[i]) +
                  " is not one of the admissible contrasts");
    }
    for (std::size_t j = i + 1; j < contrasts.size(); ++j) {
      if (contrasts[i] == contrasts[j]) {
        throw Error("estimand set: duplicate contrast " +
                    contrast_code(contrasts[i]));
      }
    }
  }
  if (target_indices().empty()) {
    throw Error("estimand set: at least one weight must be positive");
  }
}

HonestSplit split_clusters(const Dataset& ds, double fraction,
                           std::uint64_t seed) {
  const int k = ds.network().n_clusters();
  if (k < 2) {
    throw TooFewClusters("split_clusters: need at least 2 clusters, have " +
                         std::to_string(k));
  }
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("split_clusters: fraction must lie strictly in (0, 1)");
  }
  int n_tr = static_cast<int>(std::ceil(fraction * k));
  if (n_tr < 1) n_tr = 1;
  if (n_tr > k - 1) n_tr = k - 1;

  std::vector<int> order(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(derive(seed, Stream::kSplit));
  for (int i = k - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  HonestSplit split;
  split.seed = seed;
  split.train_clusters.assign(order.begin(), order.begin() + n_tr);
  split.est_clusters.assign(order.begin() + n_tr, order.end());
  std::sort(split.train_clusters.begin(), split.train_clusters.end());
  std::sort(split.est_clusters.begin(), split.est_clusters.end());
  return split;
}

double q_from_stats(std::span<const LeafStat> stats, bool honest, double n_tr,
                    double n_est) {
  double heterogeneity = 0.0;
  double penalty = 0.0;
  for (const LeafStat& s : stats) {
    heterogeneity += static_cast<double>(s.n_leaf) * s.tau_hat * s.tau_hat;
    penalty += s.v_hat;
  }
  double q = heterogeneity / n_tr;
  if (honest) q -= (1.0 / n_tr + 1.0 / n_est) * penalty;
  return q;
}

namespace {

// tau-hat and (optionally) V-hat of one contrast over a summarized leaf.
// Cells are assumed non-empty (enforced by min-size admissibility).
LeafStat target_stat(const Dataset& ds, const LeafSummary& s, Contrast c,
                     bool with_variance) {
  LeafStat st;
  st.n_leaf = s.n_leaf;
  const double n = static_cast<double>(s.n_leaf);
  st.tau_hat = (s.ht_sum[static_cast<std::size_t>(cell_index(c.hi))] -
                s.ht_sum[static_cast<std::size_t>(cell_index(c.lo))]) / n;
  if (with_variance) {
    const double va = variance_sum(ds, s, c.hi).value;
    const double vb = variance_sum(ds, s, c.lo).value;
    const double cov = covariance_sum(ds, s, c).value;
    double v = (va + vb - 2.0 * cov) / (n * n);
    if (v < 0.0) v = 0.0;
    st.v_hat = v;
  }
  return st;
}

void check_min_size(const LeafSummary& s, long min_size, const Leaf& leaf) {
  for (int c = 0; c < kNumCells; ++c) {
    if (s.count[static_cast<std::size_t>(c)] < min_size) {
      throw MinSizeViolated("leaf " + leaf.to_string() + " has cell count " +
                            std::to_string(s.count[static_cast<std::size_t>(c)]) +
                            " < min_size " + std::to_string(min_size));
    }
  }
}

}  // namespace

double q_single(const Dataset& ds, std::span<const int> train_units,
                std::span<const Leaf> partition, Contrast contrast,
                bool honest, double n_tr, double n_est, long min_size) {
  std::vector<LeafStat> stats;
  stats.reserve(partition.size());
  for (const Leaf& leaf : partition) {
    const LeafSummary s = summarize_leaf(ds, train_units, leaf);
    check_min_size(s, min_size, leaf);
    stats.push_back(target_stat(ds, s, contrast, honest));
  }
  return q_from_stats(stats, honest, n_tr, n_est);
}

double q_composite(const Dataset& ds, std::span<const int> train_units,
                   std::span<const Leaf> partition, const EstimandSet& set,
                   bool honest, double n_tr, double n_est, long min_size) {
  set.validate();
  const Leaf whole;
  const LeafSummary root = summarize_leaf(ds, train_units, whole);
  double q = 0.0;
  for (std::size_t t : set.target_indices()) {
    const Contrast c = set.contrasts[t];
    const long n_hi = root.count[static_cast<std::size_t>(cell_index(c.hi))];
    const long n_lo = root.count[static_cast<std::size_t>(cell_index(c.lo))];
    if (n_hi == 0 || n_lo == 0) {
      throw ZeroRootEffect("q_composite: whole-sample estimate of " +
                           contrast_code(c) + " is unavailable");
    }
    const double root_tau = target_stat(ds, root, c, false).tau_hat;
    if (root_tau == 0.0) {
      throw ZeroRootEffect("q_composite: whole-sample estimate of " +
                           contrast_code(c) + " is zero");
    }
    const double gamma = set.weights[t] / (root_tau * root_tau);
    q += gamma * q_single(ds, train_units, partition, c, honest, n_tr, n_est,
                          min_size);
  }
  return q;
}

namespace {

struct GrowContext {
  const Dataset& ds;
  const EstimandSet& set;
  const TreeParams& params;
  std::vector<std::size_t> targets;
  std::vector<double> gamma;  // aligned with targets
  double n_tr = 0.0;
  double n_est = 0.0;
  double penalty_coef = 0.0;  // (1/n_tr + 1/n_est) when honest, else 0
  std::vector<TreeNode>* nodes = nullptr;
  std::vector<std::uint8_t> used_on_path;
};

struct CandidateChild {
  std::vector<int> units;
  LeafSummary summary;
};

int grow_node(GrowContext& ctx, Leaf region, std::vector<int> units,
              LeafSummary summary, int depth) {
  const int id = static_cast<int>(ctx.nodes->size());
  ctx.nodes->emplace_back();
  {
    TreeNode& node = ctx.nodes->back();
    node.id = id;
    node.depth = depth;
    node.region = region;
    node.n_train = summary.n_leaf;
    node.train_cells = summary.count;
    for (const Contrast& c : ctx.set.contrasts) {
      node.train_estimates.push_back(
          effect_from_summary(ctx.ds, summary, c, ctx.params.level));
    }
  }

  if (depth >= ctx.params.max_depth) return id;

  // Parent contribution per target.
  const bool honest = ctx.params.honest;
  std::vector<LeafStat> parent(ctx.targets.size());
  for (std::size_t t = 0; t < ctx.targets.size(); ++t) {
    const Contrast c = ctx.set.contrasts[ctx.targets[t]];
    const long n_hi = summary.count[static_cast<std::size_t>(cell_index(c.hi))];
    const long n_lo = summary.count[static_cast<std::size_t>(cell_index(c.lo))];
    if (n_hi > 0 && n_lo > 0) {
      parent[t] = target_stat(ctx.ds, summary, c, honest);
    } else {
      parent[t] = LeafStat{summary.n_leaf, 0.0, 0.0};
    }
  }

  double best_gain = -std::numeric_limits<double>::infinity();
  SplitSpec best_split{};
  CandidateChild best_left, best_right;
  bool have_best = false;

  const int n_covariates = ctx.ds.n_covariates();
  std::vector<double> values;
  for (int p = 0; p < n_covariates; ++p) {
    if (ctx.used_on_path[static_cast<std::size_t>(p)]) continue;
    values.clear();
    for (int u : units) values.push_back(ctx.ds.x(u, p));
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    if (values.size() < 2) continue;

    for (std::size_t ci = 0; ci + 1 < values.size(); ++ci) {
      const double cutoff = 0.5 * (values[ci] + values[ci + 1]);
      CandidateChild left, right;
      for (int u : units) {
        (ctx.ds.x(u, p) <= cutoff ? left.units : right.units).push_back(u);
      }
      left.summary = summarize_leaf(ctx.ds, left.units, Leaf{});
      right.summary = summarize_leaf(ctx.ds, right.units, Leaf{});

      bool admissible = true;
      for (int cell = 0; cell < kNumCells && admissible; ++cell) {
        if (left.summary.count[static_cast<std::size_t>(cell)] < ctx.params.min_size ||
            right.summary.count[static_cast<std::size_t>(cell)] < ctx.params.min_size) {
          admissible = false;
        }
      }
      if (!admissible) continue;

      double gain = 0.0;
      for (std::size_t t = 0; t < ctx.targets.size(); ++t) {
        const Contrast c = ctx.set.contrasts[ctx.targets[t]];
        const LeafStat ls = target_stat(ctx.ds, left.summary, c, honest);
        const LeafStat rs = target_stat(ctx.ds, right.summary, c, honest);
        double g = (static_cast<double>(ls.n_leaf) * ls.tau_hat * ls.tau_hat +
                    static_cast<double>(rs.n_leaf) * rs.tau_hat * rs.tau_hat -
                    static_cast<double>(parent[t].n_leaf) * parent[t].tau_hat *
                        parent[t].tau_hat) / ctx.n_tr;
        if (honest) {
          g -= ctx.penalty_coef * (ls.v_hat + rs.v_hat - parent[t].v_hat);
        }
        gain += ctx.gamma[t] * g;
      }
      if (gain > best_gain) {
        best_gain = gain;
        best_split = SplitSpec{p, cutoff};
        best_left = std::move(left);
        best_right = std::move(right);
        have_best = true;
      }
    }
  }

  if (!have_best || !(best_gain > ctx.params.min_gain)) return id;

  (*ctx.nodes)[static_cast<std::size_t>(id)].split = best_split;
  Leaf left_region = region;
  left_region.constraints.push_back(
      Constraint{best_split.covariate, Rel::LE, best_split.cutoff});
  Leaf right_region = region;
  right_region.constraints.push_back(
      Constraint{best_split.covariate, Rel::GT, best_split.cutoff});

  ctx.used_on_path[static_cast<std::size_t>(best_split.covariate)] = 1;
  const int left_id = grow_node(ctx, std::move(left_region),
                                std::move(best_left.units),
                                std::move(best_left.summary), depth + 1);
  (*ctx.nodes)[static_cast<std::size_t>(id)].left = left_id;
  const int right_id = grow_node(ctx, std::move(right_region),
                                 std::move(best_right.units),
                                 std::move(best_right.summary), depth + 1);
  (*ctx.nodes)[static_cast<std::size_t>(id)].right = right_id;
  ctx.used_on_path[static_cast<std::size_t>(best_split.covariate)] = 0;
  return id;
}

}  // namespace

CausalTree CausalTree::grow(const Dataset& ds, const HonestSplit& split,
                            const EstimandSet& set, const TreeParams& params) {
  set.validate();
  if (params.max_depth < 0) throw Error("grow_tree: max_depth must be >= 0");
  if (params.min_size < 1) throw Error("grow_tree: min_size must be >= 1");
  if (!(params.level > 0.0 && params.level < 1.0)) {
    throw InvalidLevel("grow_tree: level must lie strictly in (0, 1)");
  }
  if (!(params.min_gain >= 0.0)) throw Error("grow_tree: min_gain must be >= 0");

  std::vector<int> train_units = ds.eligible_units_in(split.train_clusters);
  std::vector<int> est_units = ds.eligible_units_in(split.est_clusters);
  if (train_units.empty()) throw Error("grow_tree: training sample is empty");
  if (params.honest && est_units.empty()) {
    throw Error("grow_tree: honest criterion requires estimation units");
  }

  CausalTree tree;
  tree.estimands_ = set;
  tree.params_ = params;

  GrowContext ctx{ds, set, params, {}, {}, 0.0, 0.0, 0.0, nullptr, {}};
  ctx.targets = set.target_indices();
  ctx.n_tr = static_cast<double>(train_units.size());
  ctx.n_est = static_cast<double>(est_units.size());
  ctx.penalty_coef =
      params.honest ? (1.0 / ctx.n_tr + 1.0 / ctx.n_est) : 0.0;
  ctx.nodes = &tree.nodes_;
  ctx.used_on_path.assign(static_cast<std::size_t>(ds.n_covariates()), 0);

  // Gamma normalization, frozen at the root.
  LeafSummary root_summary = summarize_leaf(ds, train_units, Leaf{});
  const bool composite = ctx.targets.size() >= 2;
  for (std::size_t t : ctx.targets) {
    const Contrast c = set.contrasts[t];
    if (composite) {
      const long n_hi =
          root_summary.count[static_cast<std::size_t>(cell_index(c.hi))];
      const long n_lo =
          root_summary.count[static_cast<std::size_t>(cell_index(c.lo))];
      if (n_hi == 0 || n_lo == 0) {
        throw ZeroRootEffect("grow_tree: whole-sample estimate of " +
                             contrast_code(c) + " is unavailable");
      }
      const double root_tau = target_stat(ds, root_summary, c, false).tau_hat;
      if (root_tau == 0.0) {
        throw ZeroRootEffect("grow_tree: whole-sample estimate of " +
                             contrast_code(c) + " is zero");
      }
      ctx.gamma.push_back(set.weights[t] / (root_tau * root_tau));
    } else {
      ctx.gamma.push_back(1.0);
    }
  }

  grow_node(ctx, Leaf{}, std::move(train_units), std::move(root_summary), 0);
  return tree;
}

void CausalTree::estimate_leaves(const Dataset& ds, const HonestSplit& split) {
  const std::vector<int> est_units = ds.eligible_units_in(split.est_clusters);
  for (TreeNode& node : nodes_) {
    node.estimates.clear();
    const LeafSummary s = summarize_leaf(ds, est_units, node.region);
    for (const Contrast& c : estimands_.contrasts) {
      node.estimates.push_back(effect_from_summary(ds, s, c, params_.level));
    }
  }
}

std::vector<int> CausalTree::terminal_ids() const {
  std::vector<int> ids;
  for (const TreeNode& n : nodes_) {
    if (n.is_terminal()) ids.push_back(n.id);
  }
  return ids;
}

int CausalTree::depth() const {
  int d = 0;
  for (const TreeNode& n : nodes_) d = std::max(d, n.depth);
  return d;
}

int CausalTree::predict_leaf(std::span<const double> x) const {
  int id = 0;
  while (true) {
    const TreeNode& node = nodes_[static_cast<std::size_t>(id)];
    if (node.is_terminal()) return id;
    const int p = node.split->covariate;
    if (p < 0 || p >= static_cast<int>(x.size())) {
      throw MissingCovariate("predict_leaf: tree uses covariate index " +
                             std::to_string(p) + " but the vector has " +
                             std::to_string(x.size()) + " entries");
    }
    id = (x[static_cast<std::size_t>(p)] <= node.split->cutoff) ? node.left
                                                                : node.right;
  }
}

namespace {

ordered_json estimate_to_json(const EffectEstimate& e) {
  ordered_json j;
  j["contrast"] = contrast_code(e.contrast);
  if (e.available) {
    j["point"] = e.point;
    j["se"] = e.std_error;
    j["ci"] = ordered_json::array({e.ci_low, e.ci_high});
  } else {
    j["point"] = nullptr;
    j["se"] = nullptr;
    j["ci"] = nullptr;
  }
  ordered_json cells;
  cells["n_00"] = e.n_cell[static_cast<std::size_t>(cell_index({0, 0}))];
  cells["n_10"] = e.n_cell[static_cast<std::size_t>(cell_index({1, 0}))];
  cells["n_01"] = e.n_cell[static_cast<std::size_t>(cell_index({0, 1}))];
  cells["n_11"] = e.n_cell[static_cast<std::size_t>(cell_index({1, 1}))];
  j["cells"] = cells;
  j["available"] = e.available;
  return j;
}

EffectEstimate estimate_from_json(const ordered_json& j) {
  EffectEstimate e;
  e.contrast = parse_contrast(j.at("contrast").get<std::string>());
  e.available = j.at("available").get<bool>();
  if (e.available) {
    e.point = j.at("point").get<double>();
    e.std_error = j.at("se").get<double>();
    e.variance = e.std_error * e.std_error;
    e.ci_low = j.at("ci").at(0).get<double>();
    e.ci_high = j.at("ci").at(1).get<double>();
  }
  const ordered_json& cells = j.at("cells");
  e.n_cell[static_cast<std::size_t>(cell_index({0, 0}))] = cells.at("n_00").get<long>();
  e.n_cell[static_cast<std::size_t>(cell_index({1, 0}))] = cells.at("n_10").get<long>();
  e.n_cell[static_cast<std::size_t>(cell_index({0, 1}))] = cells.at("n_01").get<long>();
  e.n_cell[static_cast<std::size_t>(cell_index({1, 1}))] = cells.at("n_11").get<long>();
  e.n_leaf = e.n_cell[0] + e.n_cell[1] + e.n_cell[2] + e.n_cell[3];
  return e;
}

}  // namespace

std::string CausalTree::to_json() const {
  ordered_json root;
  ordered_json nodes = ordered_json::array();
  for (const TreeNode& n : nodes_) {
    ordered_json j;
    j["id"] = n.id;
    if (n.split.has_value()) {
      ordered_json s;
      s["covariate"] = n.split->covariate;
      s["cutoff"] = n.split->cutoff;
      j["split"] = s;
      j["children"] = ordered_json::array({n.left, n.right});
    } else {
      j["split"] = nullptr;
      j["children"] = nullptr;
    }
    ordered_json ests = ordered_json::array();
    for (const EffectEstimate& e : n.estimates) ests.push_back(estimate_to_json(e));
    j["estimates"] = ests;
    nodes.push_back(j);
  }
  root["nodes"] = nodes;
  return root.dump(2) + "\n";
}

CausalTree CausalTree::from_json(const std::string& text) {
  ordered_json root = ordered_json::parse(text);
  CausalTree tree;
  const ordered_json& nodes = root.at("nodes");
  tree.nodes_.resize(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const ordered_json& j = nodes[i];
    TreeNode& n = tree.nodes_[i];
    n.id = j.at("id").get<int>();
    if (n.id != static_cast<int>(i)) {
      throw SchemaError("tree json: node ids must be 0..n-1 in order");
    }
    if (!j.at("split").is_null()) {
      SplitSpec s;
      s.covariate = j.at("split").at("covariate").get<int>();
      s.cutoff = j.at("split").at("cutoff").get<double>();
      n.split = s;
      n.left = j.at("children").at(0).get<int>();
      n.right = j.at("children").at(1).get<int>();
      if (n.left < 0 || n.right < 0 ||
          n.left >= static_cast<int>(nodes.size()) ||
          n.right >= static_cast<int>(nodes.size())) {
        throw SchemaError("tree json: child id out of range");
      }
    }
    for (const ordered_json& ej : j.at("estimates")) {
      n.estimates.push_back(estimate_from_json(ej));
    }
  }
  // Rebuild regions and depths from the split structure.
  if (!tree.nodes_.empty()) {
    std::vector<int> stack{0};
    while (!stack.empty()) {
      const int id = stack.back();
      stack.pop_back();
      TreeNode& n = tree.nodes_[static_cast<std::size_t>(id)];
      if (!n.split.has_value()) continue;
      TreeNode& l = tree.nodes_[static_cast<std::size_t>(n.left)];
      TreeNode& r = tree.nodes_[static_cast<std::size_t>(n.right)];
      l.region = n.region;
      l.region.constraints.push_back(
          Constraint{n.split->covariate, Rel::LE, n.split->cutoff});
      l.depth = n.depth + 1;
      r.region = n.region;
      r.region.constraints.push_back(
          Constraint{n.split->covariate, Rel::GT, n.split->cutoff});
      r.depth = n.depth + 1;
      stack.push_back(n.right);
      stack.push_back(n.left);
    }
  }
  // Recover the estimand list from the first node's estimates.
  if (!tree.nodes_.empty()) {
    for (const EffectEstimate& e : tree.nodes_[0].estimates) {
      tree.estimands_.contrasts.push_back(e.contrast);
      tree.estimands_.weights.push_back(0.0);
    }
  }
  return tree;
}

std::string CausalTree::structure_signature() const {
  std::string out;
  std::vector<int> stack{0};
  if (nodes_.empty()) return out;
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    const TreeNode& n = nodes_[static_cast<std::size_t>(id)];
    if (n.is_terminal()) {
      out += "L;";
    } else {
      char buf[64];
      std::snprintf(buf, sizeof buf, "S%d:%.17g;", n.split->covariate,
                    n.split->cutoff);
      out += buf;
      stack.push_back(n.right);
      stack.push_back(n.left);
    }
  }
  return out;
}

}  // namespace nct
