#include "oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace oracle {
namespace {

// Neumaier-compensated accumulator: the enumeration sums thousands of terms
// whose magnitudes can differ widely, and the acceptance tolerances are
// tight enough that naive summation would eat the budget.
struct Kahan {
  double sum = 0.0;
  double comp = 0.0;
  void add(double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      comp += (sum - t) + v;
    } else {
      comp += (v - t) + sum;
    }
    sum = t;
  }
  double value() const { return sum + comp; }
};

// C(n,k) p^k (1-p)^(n-k) by the multiplicative formula; fine for small n.
double binom_pmf(long n, long k, double p) {
  if (k < 0 || k > n) return 0.0;
  double c = 1.0;
  for (long i = 0; i < k; ++i) {
    c = c * static_cast<double>(n - i) / static_cast<double>(i + 1);
  }
  return c * std::pow(p, static_cast<double>(k)) *
         std::pow(1.0 - p, static_cast<double>(n - k));
}

// P(Bin(n,p) <= k) by direct summation.
double binom_cdf_le(long n, long k, double p) {
  if (k < 0) return 0.0;
  if (k >= n) return 1.0;
  double s = 0.0;
  for (long i = 0; i <= k; ++i) s += binom_pmf(n, i, p);
  return s;
}

}  // namespace

Enumeration::Enumeration(const nct::ClusteredNetwork& net, double alpha, long q)
    : net_(&net), alpha_(alpha), q_(q), n_(net.n_units()) {
  if (n_ > 20) {
    throw std::invalid_argument("oracle::Enumeration: network too large");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("oracle::Enumeration: alpha out of range");
  }
  if (q < 1) throw std::invalid_argument("oracle::Enumeration: q < 1");
}

void Enumeration::ensure_tables() const {
  if (tables_built_) return;
  const std::size_t n = static_cast<std::size_t>(n_);
  std::vector<Kahan> marg(n * 4);
  std::vector<Kahan> pair(n * (n > 0 ? n - 1 : 0) / 2 * 16);
  std::vector<std::uint8_t> w(n), g(n);
  std::vector<int> cell(n);
  const std::uint64_t total = std::uint64_t{1} << n_;
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    double prob = 1.0;
    for (int u = 0; u < n_; ++u) {
      w[static_cast<std::size_t>(u)] =
          static_cast<std::uint8_t>((mask >> u) & 1u);
      prob *= w[static_cast<std::size_t>(u)] ? alpha_ : 1.0 - alpha_;
    }
    for (int u = 0; u < n_; ++u) {
      long treated = 0;
      for (int v : net_->out_neighbors(u)) {
        treated += w[static_cast<std::size_t>(v)];
      }
      g[static_cast<std::size_t>(u)] = treated >= q_ ? 1 : 0;
      cell[static_cast<std::size_t>(u)] = nct::cell_index(
          {w[static_cast<std::size_t>(u)], g[static_cast<std::size_t>(u)]});
    }
    std::size_t pair_base = 0;
    for (int u = 0; u < n_; ++u) {
      marg[static_cast<std::size_t>(u) * 4 +
           static_cast<std::size_t>(cell[static_cast<std::size_t>(u)])]
          .add(prob);
      for (int v = u + 1; v < n_; ++v) {
        pair[(pair_base + static_cast<std::size_t>(v - u - 1)) * 16 +
             static_cast<std::size_t>(cell[static_cast<std::size_t>(u)]) * 4 +
             static_cast<std::size_t>(cell[static_cast<std::size_t>(v)])]
            .add(prob);
      }
      pair_base += static_cast<std::size_t>(n_ - u - 1);
    }
  }
  marginal_.resize(marg.size());
  for (std::size_t i = 0; i < marg.size(); ++i) marginal_[i] = marg[i].value();
  pair_.resize(pair.size());
  for (std::size_t i = 0; i < pair.size(); ++i) pair_[i] = pair[i].value();
  tables_built_ = true;
}

double Enumeration::marginal(int u, nct::CellCondition c) const {
  ensure_tables();
  return marginal_[static_cast<std::size_t>(u) * 4 +
                   static_cast<std::size_t>(nct::cell_index(c))];
}

double Enumeration::pairwise(int u, nct::CellCondition cu, int v,
                             nct::CellCondition cv) const {
  if (u == v) {
    return cu == cv ? marginal(u, cu) : 0.0;
  }
  if (u > v) return pairwise(v, cv, u, cu);
  ensure_tables();
  // Index of the (u, v) pair, u < v, in row-major upper-triangle order.
  const std::size_t su = static_cast<std::size_t>(u);
  const std::size_t sn = static_cast<std::size_t>(n_);
  const std::size_t base = su * sn - su * (su + 1) / 2 +
                           static_cast<std::size_t>(v - u - 1);
  return pair_[base * 16 +
               static_cast<std::size_t>(nct::cell_index(cu)) * 4 +
               static_cast<std::size_t>(nct::cell_index(cv))];
}

double Enumeration::expectation(const Statistic& f) const {
  const std::size_t n = static_cast<std::size_t>(n_);
  std::vector<std::uint8_t> w(n), g(n);
  Kahan acc;
  const std::uint64_t total = std::uint64_t{1} << n_;
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    double prob = 1.0;
    for (int u = 0; u < n_; ++u) {
      w[static_cast<std::size_t>(u)] =
          static_cast<std::uint8_t>((mask >> u) & 1u);
      prob *= w[static_cast<std::size_t>(u)] ? alpha_ : 1.0 - alpha_;
    }
    if (prob == 0.0) continue;
    for (int u = 0; u < n_; ++u) {
      long treated = 0;
      for (int v : net_->out_neighbors(u)) {
        treated += w[static_cast<std::size_t>(v)];
      }
      g[static_cast<std::size_t>(u)] = treated >= q_ ? 1 : 0;
    }
    acc.add(prob * f(std::span<const std::uint8_t>(w),
                     std::span<const std::uint8_t>(g)));
  }
  return acc.value();
}

double Enumeration::variance(const Statistic& f) const {
  const double mean = expectation(f);
  return expectation([&](std::span<const std::uint8_t> w,
                         std::span<const std::uint8_t> g) {
    const double d = f(w, g) - mean;
    return d * d;
  });
}

double pairwise_nonadjacent(long a, long b, long o, double alpha, long q,
                            nct::CellCondition cu, nct::CellCondition cv) {
  if (a < 0 || b < 0 || o < 0) {
    throw std::invalid_argument("pairwise_nonadjacent: negative count");
  }
  // Condition on S = number of treated shared out-neighbors; given S = s the
  // two exposures depend on disjoint, independent neighbor sets.
  double joint_g = 0.0;
  for (long s = 0; s <= o; ++s) {
    const double ps = binom_pmf(o, s, alpha);
    if (ps == 0.0) continue;
    const double gu0 = binom_cdf_le(a, q - 1 - s, alpha);
    const double gv0 = binom_cdf_le(b, q - 1 - s, alpha);
    const double fu = cu.g ? 1.0 - gu0 : gu0;
    const double fv = cv.g ? 1.0 - gv0 : gv0;
    joint_g += ps * fu * fv;
  }
  // Neither unit is in the other's out-neighborhood, so the own-treatment
  // coordinates are independent of both exposures and of each other.
  const double wu = cu.w ? alpha : 1.0 - alpha;
  const double wv = cv.w ? alpha : 1.0 - alpha;
  return wu * wv * joint_g;
}

}  // namespace oracle
