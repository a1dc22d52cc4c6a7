#include "nct/design.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>

#include "nct/common.hpp"
#include "nct/mathutil.hpp"
#include "nct/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace nct {

namespace {

void validate_design(double alpha, ThresholdExposure mapping) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw InvalidProbability("design: alpha must lie strictly in (0, 1)");
  }
  if (mapping.q < 1) {
    throw InvalidThreshold("design: exposure threshold q must be >= 1");
  }
}

// P(Bin(degree, alpha) <= q-1) and P(Bin(degree, alpha) >= q), each summed
// directly so both tails carry full relative accuracy.
struct TailPair {
  double below = 1.0;  // exposure 0
  double at_or_above = 0.0;  // exposure 1
};

TailPair exposure_tails(long degree, double alpha, long q) {
  TailPair t;
  t.below = binomial_cdf(q - 1, degree, alpha);
  t.at_or_above = binomial_upper_tail(q, degree, alpha);
  return t;
}

}  // namespace

std::vector<std::uint8_t> exposures(const ClusteredNetwork& net,
                                    std::span<const std::uint8_t> w,
                                    ThresholdExposure mapping) {
  if (static_cast<int>(w.size()) != net.n_units()) {
    throw Error("exposures: treatment vector length does not match unit count");
  }
  if (mapping.q < 1) {
    throw InvalidThreshold("exposures: exposure threshold q must be >= 1");
  }
  std::vector<std::uint8_t> g(w.size(), 0);
  for (int u = 0; u < net.n_units(); ++u) {
    long treated = 0;
    for (int v : net.out_neighbors(u)) treated += w[static_cast<std::size_t>(v)];
    g[static_cast<std::size_t>(u)] = treated >= mapping.q ? 1 : 0;
  }
  return g;
}

std::vector<std::uint8_t> assign_bernoulli(int n_units, double alpha,
                                           std::uint64_t seed) {
  // Degenerate alphas are allowed here: assignment itself is well defined at
  // the extremes, and only probability computations need the strict interior.
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw InvalidProbability("assign_bernoulli: alpha must lie in [0, 1]");
  }
  Rng rng(derive(seed, Stream::kAssignment));
  std::vector<std::uint8_t> w(static_cast<std::size_t>(n_units));
  for (auto& wi : w) wi = rng.bernoulli(alpha) ? 1 : 0;
  return w;
}

double marginal_probability(long degree, double alpha, long q, CellCondition c) {
  validate_design(alpha, ThresholdExposure{q});
  if (degree < 0) throw Error("marginal_probability: degree must be >= 0");
  const TailPair t = exposure_tails(degree, alpha, q);
  const double w_part = c.w ? alpha : 1.0 - alpha;
  const double g_part = c.g ? t.at_or_above : t.below;
  if (g_part == 0.0) {
    throw PositivityViolation(
        "marginal_probability: condition (w=" + std::to_string(int(c.w)) +
        ", g=" + std::to_string(int(c.g)) + ") has probability 0 at degree " +
        std::to_string(degree) + " with q=" + std::to_string(q));
  }
  return w_part * g_part;
}

PositivitySplit positivity_filter(const ClusteredNetwork& net,
                                  ThresholdExposure mapping) {
  if (mapping.q < 1) {
    throw InvalidThreshold("positivity_filter: q must be >= 1");
  }
  PositivitySplit split;
  for (int u = 0; u < net.n_units(); ++u) {
    (net.out_degree(u) >= mapping.q ? split.eligible : split.excluded).push_back(u);
  }
  return split;
}

namespace {

// Sorted dependency set {u} union N_u.
std::vector<int> dependency_set(const ClusteredNetwork& net, int u) {
  auto nb = net.out_neighbors(u);
  std::vector<int> d(nb.begin(), nb.end());
  d.insert(std::lower_bound(d.begin(), d.end(), u), u);
  return d;
}

bool sorted_intersects(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      return true;
    }
  }
  return false;
}

}  // namespace

bool dependency_overlap(const ClusteredNetwork& net, int i, int j) {
  if (i == j) return true;
  if (net.cluster_of(i) != net.cluster_of(j)) return false;
  return sorted_intersects(dependency_set(net, i), dependency_set(net, j));
}

ProbabilityTable::ProbabilityTable(const ClusteredNetwork& net, double alpha,
                                   ThresholdExposure mapping,
                                   PairwiseOptions options, int jobs)
    : net_(&net), alpha_(alpha), mapping_(mapping), options_(options) {
  validate_design(alpha, mapping);
  if (options_.enum_limit < 2) {
    throw Error("ProbabilityTable: enum_limit must be >= 2");
  }
  if (options_.mc_draws < 1) {
    throw Error("ProbabilityTable: mc_draws must be >= 1");
  }
  const int n = net.n_units();
  marginals_.assign(static_cast<std::size_t>(n) * kNumCells, 0.0);
  eligible_.assign(static_cast<std::size_t>(n), 0);
  if (jobs > 1) {
    build_marginals_parallel(jobs);
  } else {
    build_marginals_serial();
  }
  build_dependents();
}

void ProbabilityTable::build_marginals_serial() {
  const int n = net_->n_units();
  // Per-degree tails, computed once per distinct degree.
  std::map<long, TailPair> tails;
  for (int u = 0; u < n; ++u) {
    const long deg = net_->out_degree(u);
    auto it = tails.find(deg);
    if (it == tails.end()) {
      it = tails.emplace(deg, exposure_tails(deg, alpha_, mapping_.q)).first;
    }
    const TailPair& t = it->second;
    double* row = marginals_.data() + static_cast<std::size_t>(u) * kNumCells;
    row[cell_index({0, 0})] = (1.0 - alpha_) * t.below;
    row[cell_index({1, 0})] = alpha_ * t.below;
    row[cell_index({0, 1})] = (1.0 - alpha_) * t.at_or_above;
    row[cell_index({1, 1})] = alpha_ * t.at_or_above;
    eligible_[static_cast<std::size_t>(u)] = deg >= mapping_.q ? 1 : 0;
  }
}

void ProbabilityTable::build_marginals_parallel(int jobs) {
  const int n = net_->n_units();
  // Distinct degrees first (serial), then an index per unit.
  std::vector<long> degrees(static_cast<std::size_t>(n));
  for (int u = 0; u < n; ++u) degrees[static_cast<std::size_t>(u)] = net_->out_degree(u);
  std::vector<long> distinct = degrees;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::vector<TailPair> tails(distinct.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(jobs)
#endif
  for (long idx = 0; idx < static_cast<long>(distinct.size()); ++idx) {
    tails[static_cast<std::size_t>(idx)] =
        exposure_tails(distinct[static_cast<std::size_t>(idx)], alpha_, mapping_.q);
  }

#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(jobs)
#endif
  for (int u = 0; u < n; ++u) {
    const long deg = degrees[static_cast<std::size_t>(u)];
    const std::size_t idx = static_cast<std::size_t>(
        std::lower_bound(distinct.begin(), distinct.end(), deg) - distinct.begin());
    const TailPair& t = tails[idx];
    double* row = marginals_.data() + static_cast<std::size_t>(u) * kNumCells;
    row[cell_index({0, 0})] = (1.0 - alpha_) * t.below;
    row[cell_index({1, 0})] = alpha_ * t.below;
    row[cell_index({0, 1})] = (1.0 - alpha_) * t.at_or_above;
    row[cell_index({1, 1})] = alpha_ * t.at_or_above;
    eligible_[static_cast<std::size_t>(u)] = deg >= mapping_.q ? 1 : 0;
  }
}

void ProbabilityTable::build_dependents() {
  const int n = net_->n_units();
  std::vector<std::vector<int>> dep_sets(static_cast<std::size_t>(n));
  for (int u = 0; u < n; ++u) dep_sets[static_cast<std::size_t>(u)] = dependency_set(*net_, u);

  std::vector<std::vector<int>> partners(static_cast<std::size_t>(n));
  for (int k = 0; k < net_->n_clusters(); ++k) {
    const auto units = net_->cluster_units(k);
    for (std::size_t a = 0; a < units.size(); ++a) {
      for (std::size_t b = a + 1; b < units.size(); ++b) {
        const int u = units[a];
        const int v = units[b];
        if (sorted_intersects(dep_sets[static_cast<std::size_t>(u)],
                              dep_sets[static_cast<std::size_t>(v)])) {
          partners[static_cast<std::size_t>(u)].push_back(v);
          partners[static_cast<std::size_t>(v)].push_back(u);
        }
      }
    }
  }
  dep_begin_.assign(static_cast<std::size_t>(n) + 1, 0);
  long total = 0;
  for (int u = 0; u < n; ++u) total += static_cast<long>(partners[static_cast<std::size_t>(u)].size());
  dep_flat_.clear();
  dep_flat_.reserve(static_cast<std::size_t>(total));
  for (int u = 0; u < n; ++u) {
    dep_begin_[static_cast<std::size_t>(u)] = static_cast<int>(dep_flat_.size());
    auto& row = partners[static_cast<std::size_t>(u)];
    std::sort(row.begin(), row.end());
    dep_flat_.insert(dep_flat_.end(), row.begin(), row.end());
  }
  dep_begin_[static_cast<std::size_t>(n)] = static_cast<int>(dep_flat_.size());
}

PairProbability ProbabilityTable::pairwise(int u, CellCondition cu, int v,
                                           CellCondition cv) const {
  if (u == v) {
    return {cu == cv ? marginal(u, cu) : 0.0, 0.0};
  }
  if (net_->cluster_of(u) != net_->cluster_of(v) ||
      !dependency_overlap(*net_, u, v)) {
    ++counts_.product;
    return {marginal(u, cu) * marginal(v, cv), 0.0};
  }
  const bool swapped = u > v;
  const int a = swapped ? v : u;
  const int b = swapped ? u : v;
  const CellCondition ca = swapped ? cv : cu;
  const CellCondition cb = swapped ? cu : cv;
  const PairTable& table = pair_table(a, b);
  return {table.cell[static_cast<std::size_t>(cell_index(ca)) * kNumCells +
                     static_cast<std::size_t>(cell_index(cb))],
          table.mc_se};
}

const ProbabilityTable::PairTable& ProbabilityTable::pair_table(int u, int v) const {
  const std::uint64_t key =
      (static_cast<std::uint64_t>(static_cast<std::uint32_t>(u)) << 32) |
      static_cast<std::uint64_t>(static_cast<std::uint32_t>(v));
  auto it = pair_cache_.find(key);
  if (it != pair_cache_.end()) return it->second;

  // Joint dependency set size decides the dispatch.
  auto nu = net_->out_neighbors(u);
  auto nv = net_->out_neighbors(v);
  std::vector<int> joint(nu.begin(), nu.end());
  joint.insert(joint.end(), nv.begin(), nv.end());
  joint.push_back(u);
  joint.push_back(v);
  std::sort(joint.begin(), joint.end());
  joint.erase(std::unique(joint.begin(), joint.end()), joint.end());

  PairTable table;
  if (static_cast<int>(joint.size()) <= options_.enum_limit) {
    ++counts_.enumeration;
    table = enumerate_pair(u, v);
  } else if (mapping_.q == 1) {
    ++counts_.closed_form_q1;
    table = closed_form_q1_pair(u, v);
  } else {
    ++counts_.monte_carlo;
    table = monte_carlo_pair(u, v);
  }
  return pair_cache_.emplace(key, table).first->second;
}

ProbabilityTable::PairTable ProbabilityTable::enumerate_pair(int u, int v) const {
  auto nu = net_->out_neighbors(u);
  auto nv = net_->out_neighbors(v);
  std::vector<int> joint(nu.begin(), nu.end());
  joint.insert(joint.end(), nv.begin(), nv.end());
  joint.push_back(u);
  joint.push_back(v);
  std::sort(joint.begin(), joint.end());
  joint.erase(std::unique(joint.begin(), joint.end()), joint.end());
  const int m = static_cast<int>(joint.size());

  auto position = [&](int unit) {
    return static_cast<int>(std::lower_bound(joint.begin(), joint.end(), unit) -
                            joint.begin());
  };
  std::uint64_t mask_nu = 0, mask_nv = 0;
  for (int x : nu) mask_nu |= std::uint64_t{1} << position(x);
  for (int x : nv) mask_nv |= std::uint64_t{1} << position(x);
  const int pos_u = position(u);
  const int pos_v = position(v);

  // powers[j] = alpha^j (1-alpha)^(m-j)
  std::vector<double> powers(static_cast<std::size_t>(m) + 1);
  for (int j = 0; j <= m; ++j) {
    powers[static_cast<std::size_t>(j)] =
        std::pow(alpha_, j) * std::pow(1.0 - alpha_, m - j);
  }

  PairTable table;
  const long q = mapping_.q;
  const std::uint64_t limit = std::uint64_t{1} << m;
  for (std::uint64_t x = 0; x < limit; ++x) {
    const int wu = static_cast<int>((x >> pos_u) & 1u);
    const int wv = static_cast<int>((x >> pos_v) & 1u);
    const int gu = std::popcount(x & mask_nu) >= q ? 1 : 0;
    const int gv = std::popcount(x & mask_nv) >= q ? 1 : 0;
    table.cell[static_cast<std::size_t>(wu + 2 * gu) * kNumCells +
               static_cast<std::size_t>(wv + 2 * gv)] +=
        powers[static_cast<std::size_t>(std::popcount(x))];
  }
  return table;
}

ProbabilityTable::PairTable ProbabilityTable::closed_form_q1_pair(int u, int v) const {
  auto nu = net_->out_neighbors(u);
  auto nv = net_->out_neighbors(v);
  const bool u_sees_v = net_->has_edge(u, v);
  const bool v_sees_u = net_->has_edge(v, u);
  // Overlap of the reduced neighborhoods R_u = N_u \ {v}, R_v = N_v \ {u}.
  long o = 0;
  {
    std::size_t i = 0, j = 0;
    while (i < nu.size() && j < nv.size()) {
      if (nu[i] < nv[j]) {
        ++i;
      } else if (nv[j] < nu[i]) {
        ++j;
      } else {
        if (nu[i] != u && nu[i] != v) ++o;
        ++i;
        ++j;
      }
    }
  }
  const long ru = static_cast<long>(nu.size()) - (u_sees_v ? 1 : 0);
  const long rv = static_cast<long>(nv.size()) - (v_sees_u ? 1 : 0);
  const long a = ru - o;
  const long b = rv - o;
  const double beta = 1.0 - alpha_;

  PairTable table;
  for (int wu = 0; wu <= 1; ++wu) {
    for (int wv = 0; wv <= 1; ++wv) {
      // Exposure forced by the partner's own treatment.
      const bool tu = u_sees_v && wv == 1;
      const bool tv = v_sees_u && wu == 1;
      const double p_joint0 =
          (tu || tv) ? 0.0 : std::pow(beta, static_cast<double>(a + b + o));
      const double p_u0 = tu ? 0.0 : std::pow(beta, static_cast<double>(ru));
      const double p_v0 = tv ? 0.0 : std::pow(beta, static_cast<double>(rv));
      const double w_prob = (wu ? alpha_ : beta) * (wv ? alpha_ : beta);
      auto put = [&](int gu, int gv, double p) {
        if (p < 0.0) p = 0.0;  // guard tiny negative round-off
        table.cell[static_cast<std::size_t>(wu + 2 * gu) * kNumCells +
                   static_cast<std::size_t>(wv + 2 * gv)] = w_prob * p;
      };
      put(0, 0, p_joint0);
      put(0, 1, p_u0 - p_joint0);
      put(1, 0, p_v0 - p_joint0);
      put(1, 1, 1.0 - p_u0 - p_v0 + p_joint0);
    }
  }
  return table;
}

ProbabilityTable::PairTable ProbabilityTable::monte_carlo_pair(int u, int v) const {
  auto nu = net_->out_neighbors(u);
  auto nv = net_->out_neighbors(v);
  std::vector<int> joint(nu.begin(), nu.end());
  joint.insert(joint.end(), nv.begin(), nv.end());
  joint.push_back(u);
  joint.push_back(v);
  std::sort(joint.begin(), joint.end());
  joint.erase(std::unique(joint.begin(), joint.end()), joint.end());
  const int m = static_cast<int>(joint.size());

  std::vector<std::uint8_t> in_nu(static_cast<std::size_t>(m), 0);
  std::vector<std::uint8_t> in_nv(static_cast<std::size_t>(m), 0);
  int pos_u = 0, pos_v = 0;
  for (int idx = 0; idx < m; ++idx) {
    const int unit = joint[static_cast<std::size_t>(idx)];
    if (std::binary_search(nu.begin(), nu.end(), unit)) in_nu[static_cast<std::size_t>(idx)] = 1;
    if (std::binary_search(nv.begin(), nv.end(), unit)) in_nv[static_cast<std::size_t>(idx)] = 1;
    if (unit == u) pos_u = idx;
    if (unit == v) pos_v = idx;
  }

  Rng rng(derive(options_.mc_seed, Stream::kMonteCarlo,
                 static_cast<std::uint64_t>(u), static_cast<std::uint64_t>(v)));
  std::array<long, kNumCells * kNumCells> tally{};
  std::vector<std::uint8_t> w(static_cast<std::size_t>(m));
  const long q = mapping_.q;
  for (long draw = 0; draw < options_.mc_draws; ++draw) {
    long tu = 0, tv = 0;
    for (int idx = 0; idx < m; ++idx) {
      const std::uint8_t wi = rng.bernoulli(alpha_) ? 1 : 0;
      w[static_cast<std::size_t>(idx)] = wi;
      if (wi) {
        tu += in_nu[static_cast<std::size_t>(idx)];
        tv += in_nv[static_cast<std::size_t>(idx)];
      }
    }
    const int wu = w[static_cast<std::size_t>(pos_u)];
    const int wv = w[static_cast<std::size_t>(pos_v)];
    const int gu = tu >= q ? 1 : 0;
    const int gv = tv >= q ? 1 : 0;
    ++tally[static_cast<std::size_t>(wu + 2 * gu) * kNumCells +
            static_cast<std::size_t>(wv + 2 * gv)];
  }

  PairTable table;
  const double n_draws = static_cast<double>(options_.mc_draws);
  double max_se = 0.0;
  for (std::size_t cell = 0; cell < table.cell.size(); ++cell) {
    const double p_hat = static_cast<double>(tally[cell]) / n_draws;
    table.cell[cell] = p_hat;
    max_se = std::max(max_se, std::sqrt(p_hat * (1.0 - p_hat) / n_draws));
  }
  table.mc_se = max_se;
  return table;
}

}  // namespace nct
