#include "nct/estimator.hpp"

#include <algorithm>
#include <cmath>

#include "nct/common.hpp"
#include "nct/mathutil.hpp"

namespace nct {

Contrast parse_contrast(const std::string& code) {
  if (code.size() != 4 ||
      code.find_first_not_of("01") != std::string::npos) {
    throw Error("contrast code must be four binary digits, got '" + code + "'");
  }
  Contrast c;
  c.hi = {static_cast<std::uint8_t>(code[0] - '0'),
          static_cast<std::uint8_t>(code[1] - '0')};
  c.lo = {static_cast<std::uint8_t>(code[2] - '0'),
          static_cast<std::uint8_t>(code[3] - '0')};
  if (c.hi == c.lo) {
    throw Error("contrast '" + code + "' compares a condition with itself");
  }
  return c;
}

std::string contrast_code(Contrast c) {
  std::string s(4, '0');
  s[0] = static_cast<char>('0' + c.hi.w);
  s[1] = static_cast<char>('0' + c.hi.g);
  s[2] = static_cast<char>('0' + c.lo.w);
  s[3] = static_cast<char>('0' + c.lo.g);
  return s;
}

const std::vector<Contrast>& admissible_contrasts() {
  static const std::vector<Contrast> all = {
      parse_contrast("1000"), parse_contrast("0100"), parse_contrast("1101"),
      parse_contrast("1110"), parse_contrast("1100")};
  return all;
}

bool Leaf::contains(std::span<const double> x) const {
  for (const Constraint& c : constraints) {
    if (c.covariate < 0 || c.covariate >= static_cast<int>(x.size())) {
      throw MissingCovariate("constraint references covariate index " +
                             std::to_string(c.covariate) + " but only " +
                             std::to_string(x.size()) + " are present");
    }
    const double v = x[static_cast<std::size_t>(c.covariate)];
    switch (c.rel) {
      case Rel::LE:
        if (!(v <= c.cutoff)) return false;
        break;
      case Rel::GT:
        if (!(v > c.cutoff)) return false;
        break;
      case Rel::EQ:
        if (v != c.cutoff) return false;
        break;
    }
  }
  return true;
}

std::string Leaf::to_string() const {
  if (constraints.empty()) return "*";
  std::string out;
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    const Constraint& c = constraints[i];
    if (i > 0) out += " & ";
    out += "x" + std::to_string(c.covariate + 1);
    switch (c.rel) {
      case Rel::LE: out += "<="; break;
      case Rel::GT: out += ">"; break;
      case Rel::EQ: out += "="; break;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", c.cutoff);
    out += buf;
  }
  return out;
}

Dataset::Dataset(const ClusteredNetwork& net, const ProbabilityTable& probs,
                 std::vector<std::uint8_t> w, std::vector<double> y,
                 std::vector<double> x, int n_covariates)
    : net_(&net),
      probs_(&probs),
      w_(std::move(w)),
      y_(std::move(y)),
      x_(std::move(x)),
      n_covariates_(n_covariates) {
  if (&probs.network() != &net) {
    throw Error("Dataset: probability table was built for a different network");
  }
  const std::size_t n = static_cast<std::size_t>(net.n_units());
  if (w_.size() != n) throw SchemaError("Dataset: W length mismatch");
  if (y_.size() != n) throw SchemaError("Dataset: Y length mismatch");
  if (n_covariates_ < 0) throw SchemaError("Dataset: negative covariate count");
  if (x_.size() != n * static_cast<std::size_t>(n_covariates_)) {
    throw SchemaError("Dataset: X size mismatch");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (w_[i] > 1) {
      throw SchemaError("Dataset: W must be 0 or 1 (unit index " +
                        std::to_string(i) + ")");
    }
    if (!std::isfinite(y_[i])) {
      throw SchemaError("Dataset: Y must be finite (unit index " +
                        std::to_string(i) + ")");
    }
  }
  for (double v : x_) {
    if (!std::isfinite(v)) throw SchemaError("Dataset: X must be finite");
  }
  g_ = exposures(net, w_, probs.mapping());
  for (int u = 0; u < net.n_units(); ++u) {
    if (probs.eligible(u)) eligible_units_.push_back(u);
  }
}

std::vector<int> Dataset::eligible_units_in(std::span<const int> clusters) const {
  std::vector<std::uint8_t> wanted(static_cast<std::size_t>(net_->n_clusters()), 0);
  for (int k : clusters) wanted[static_cast<std::size_t>(k)] = 1;
  std::vector<int> out;
  for (int u : eligible_units_) {
    if (wanted[static_cast<std::size_t>(net_->cluster_of(u))]) out.push_back(u);
  }
  return out;
}

LeafSummary summarize_leaf(const Dataset& ds, std::span<const int> sample,
                           const Leaf& leaf) {
  LeafSummary s;
  s.in_leaf.assign(static_cast<std::size_t>(ds.n_units()), 0);
  for (int u : sample) {
    if (!leaf.contains(ds.x_row(u))) continue;
    s.in_leaf[static_cast<std::size_t>(u)] = 1;
    s.members.push_back(u);
    ++s.n_leaf;
    const CellCondition c = ds.condition(u);
    const int idx = cell_index(c);
    ++s.count[static_cast<std::size_t>(idx)];
    s.ht_sum[static_cast<std::size_t>(idx)] +=
        ds.y(u) / ds.probs().marginal(u, c);
  }
  return s;
}

namespace {

std::string cell_name(CellCondition c) {
  return "(w=" + std::to_string(int(c.w)) + ", g=" + std::to_string(int(c.g)) + ")";
}

}  // namespace

double leaf_mean(const Dataset& ds, std::span<const int> sample,
                 const Leaf& leaf, CellCondition c) {
  const LeafSummary s = summarize_leaf(ds, sample, leaf);
  if (s.count[static_cast<std::size_t>(cell_index(c))] == 0) {
    throw EmptyCell("leaf_mean: no unit observed in condition " + cell_name(c) +
                    " within leaf " + leaf.to_string());
  }
  return s.ht_sum[static_cast<std::size_t>(cell_index(c))] /
         static_cast<double>(s.n_leaf);
}

WeightedSum variance_sum(const Dataset& ds, const LeafSummary& summary,
                         CellCondition c) {
  const ProbabilityTable& probs = ds.probs();
  WeightedSum out;
  for (int i : summary.members) {
    const bool i_matched = ds.condition(i) == c;
    const double pi_i = probs.marginal(i, c);
    if (i_matched) {
      const double ht_i = ds.y(i) / pi_i;
      out.value += (1.0 - pi_i) * ht_i * ht_i;
    }
    // Ordered dependent pairs (i, j), both in leaf ∩ sample.
    for (int j : probs.dependents(i)) {
      if (!summary.in_leaf[static_cast<std::size_t>(j)]) continue;
      const PairProbability pij = probs.pairwise(i, c, j, c);
      out.max_mc_se = std::max(out.max_mc_se, pij.mc_se);
      if (pij.value > 0.0) {
        if (!i_matched || !(ds.condition(j) == c)) continue;
        const double pi_j = probs.marginal(j, c);
        out.value += (pij.value - pi_i * pi_j) / pij.value *
                     (ds.y(i) / pi_i) * (ds.y(j) / pi_j);
      } else {
        // Joint condition unobservable: conservative correction, half per
        // ordered visit.
        if (i_matched) out.value += ds.y(i) * ds.y(i) / (2.0 * pi_i);
        if (ds.condition(j) == c) {
          const double pi_j = probs.marginal(j, c);
          out.value += ds.y(j) * ds.y(j) / (2.0 * pi_j);
        }
      }
    }
  }
  return out;
}

WeightedSum covariance_sum(const Dataset& ds, const LeafSummary& summary,
                           Contrast contrast) {
  const ProbabilityTable& probs = ds.probs();
  const CellCondition c = contrast.hi;
  const CellCondition cp = contrast.lo;
  WeightedSum out;
  for (int i : summary.members) {
    const bool i_hi = ds.condition(i) == c;
    const bool i_lo = ds.condition(i) == cp;
    const double pi_i_hi = probs.marginal(i, c);
    const double pi_i_lo = probs.marginal(i, cp);

    // Same-unit correction: a unit cannot be observed in both conditions.
    if (i_hi && pi_i_hi > 0.0) {
      out.value -= ds.y(i) * ds.y(i) / (2.0 * pi_i_hi);
    }
    if (i_lo && pi_i_lo > 0.0) {
      out.value -= ds.y(i) * ds.y(i) / (2.0 * pi_i_lo);
    }

    // Ordered dependent pairs (i in c, j in c').
    for (int j : probs.dependents(i)) {
      if (!summary.in_leaf[static_cast<std::size_t>(j)]) continue;
      const PairProbability pij = probs.pairwise(i, c, j, cp);
      out.max_mc_se = std::max(out.max_mc_se, pij.mc_se);
      const bool j_lo = ds.condition(j) == cp;
      const double pi_j_lo = probs.marginal(j, cp);
      if (pij.value > 0.0) {
        if (!i_hi || !j_lo) continue;
        out.value += (pij.value - pi_i_hi * pi_j_lo) / pij.value *
                     (ds.y(i) / pi_i_hi) * (ds.y(j) / pi_j_lo);
      } else {
        if (i_hi) out.value -= ds.y(i) * ds.y(i) / (2.0 * pi_i_hi);
        if (j_lo) out.value -= ds.y(j) * ds.y(j) / (2.0 * pi_j_lo);
      }
    }
  }
  return out;
}

double leaf_mean_variance(const Dataset& ds, std::span<const int> sample,
                          const Leaf& leaf, CellCondition c) {
  const LeafSummary s = summarize_leaf(ds, sample, leaf);
  if (s.count[static_cast<std::size_t>(cell_index(c))] == 0) {
    throw EmptyCell("leaf_mean_variance: no unit observed in condition " +
                    cell_name(c) + " within leaf " + leaf.to_string());
  }
  const double n = static_cast<double>(s.n_leaf);
  return variance_sum(ds, s, c).value / (n * n);
}

double effect_covariance(const Dataset& ds, std::span<const int> sample,
                         const Leaf& leaf, Contrast contrast) {
  const LeafSummary s = summarize_leaf(ds, sample, leaf);
  if (s.n_leaf == 0) {
    throw EmptyCell("effect_covariance: leaf " + leaf.to_string() +
                    " contains no sampled unit");
  }
  const double n = static_cast<double>(s.n_leaf);
  return covariance_sum(ds, s, contrast).value / (n * n);
}

EffectEstimate effect_from_summary(const Dataset& ds, const LeafSummary& summary,
                                   Contrast contrast, double level) {
  EffectEstimate e;
  e.contrast = contrast;
  e.n_cell = summary.count;
  e.n_leaf = summary.n_leaf;
  const long n_hi = summary.count[static_cast<std::size_t>(cell_index(contrast.hi))];
  const long n_lo = summary.count[static_cast<std::size_t>(cell_index(contrast.lo))];
  if (summary.n_leaf == 0 || n_hi == 0 || n_lo == 0) {
    e.available = false;
    return e;
  }
  e.available = true;
  const double n = static_cast<double>(summary.n_leaf);
  e.point = (summary.ht_sum[static_cast<std::size_t>(cell_index(contrast.hi))] -
             summary.ht_sum[static_cast<std::size_t>(cell_index(contrast.lo))]) / n;
  const WeightedSum va = variance_sum(ds, summary, contrast.hi);
  const WeightedSum vb = variance_sum(ds, summary, contrast.lo);
  const WeightedSum cov = covariance_sum(ds, summary, contrast);
  e.max_mc_se = std::max({va.max_mc_se, vb.max_mc_se, cov.max_mc_se});
  double variance = (va.value + vb.value - 2.0 * cov.value) / (n * n);
  if (variance < 0.0) {
    variance = 0.0;
    e.variance_clamped = true;
  }
  e.variance = variance;
  e.std_error = std::sqrt(variance);
  const auto ci = confidence_interval(e.point, e.std_error, level);
  e.ci_low = ci.first;
  e.ci_high = ci.second;
  return e;
}

EffectEstimate leaf_effect(const Dataset& ds, std::span<const int> sample,
                           const Leaf& leaf, Contrast contrast, double level) {
  const LeafSummary s = summarize_leaf(ds, sample, leaf);
  return effect_from_summary(ds, s, contrast, level);
}

std::pair<double, double> confidence_interval(double point, double std_error,
                                              double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw InvalidLevel("confidence_interval: level must lie strictly in (0, 1)");
  }
  const double z = inverse_normal_cdf(0.5 + level / 2.0);
  return {point - z * std_error, point + z * std_error};
}

}  // namespace nct
