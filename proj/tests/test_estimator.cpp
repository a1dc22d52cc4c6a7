#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "nct/common.hpp"
#include "nct/design.hpp"
#include "nct/estimator.hpp"
#include "nct/graph.hpp"
#include "oracle.hpp"

using nct::CellCondition;
using nct::ClusteredNetwork;
using nct::Contrast;
using nct::Dataset;
using nct::EdgeRow;
using nct::Leaf;
using nct::ProbabilityTable;

namespace {

// Two 2-cycles in separate clusters: four degree-1 units whose marginals are
// all 0.25 at alpha=0.5, q=1.
ClusteredNetwork two_pair_network() {
  const std::vector<EdgeRow> rows = {{"1", "a", "b"}, {"2", "c", "d"}};
  return ClusteredNetwork::from_edge_list(rows, false);
}

std::vector<int> all_units(const Dataset& ds) {
  std::vector<int> units(static_cast<std::size_t>(ds.n_units()));
  std::iota(units.begin(), units.end(), 0);
  return units;
}

}  // namespace

TEST_CASE("contrast codes parse and round-trip") {
  const Contrast t = nct::parse_contrast("1000");
  CHECK(t.hi == CellCondition{1, 0});
  CHECK(t.lo == CellCondition{0, 0});
  for (const auto& c : nct::admissible_contrasts()) {
    CHECK(nct::parse_contrast(nct::contrast_code(c)) == c);
  }
  CHECK(nct::admissible_contrasts().size() == 5);
  CHECK_THROWS_AS(nct::parse_contrast("10"), nct::Error);
  CHECK_THROWS_AS(nct::parse_contrast("10x0"), nct::Error);
  CHECK_THROWS_AS(nct::parse_contrast("1010"), nct::Error);  // hi == lo
}

TEST_CASE("leaf membership and printing") {
  Leaf leaf;
  CHECK(leaf.to_string() == "*");
  CHECK(leaf.contains(std::vector<double>{1.0, 0.0}));
  leaf.constraints.push_back({0, nct::Rel::LE, 0.5});
  leaf.constraints.push_back({2, nct::Rel::GT, 0.5});
  CHECK(leaf.to_string() == "x1<=0.5 & x3>0.5");
  CHECK(leaf.contains(std::vector<double>{0.0, 9.0, 1.0}));
  CHECK_FALSE(leaf.contains(std::vector<double>{1.0, 9.0, 1.0}));
  CHECK_FALSE(leaf.contains(std::vector<double>{0.0, 9.0, 0.0}));
  // Boundary: <= keeps the cutoff value, > excludes it.
  CHECK(leaf.contains(std::vector<double>{0.5, 0.0, 0.6}));
  CHECK_THROWS_AS(leaf.contains(std::vector<double>{0.0}),
                  nct::MissingCovariate);
}

TEST_CASE("dataset recomputes exposures and tracks eligibility") {
  const auto net = fixtures::path_network(4);  // degrees 1,2,2,1
  const ProbabilityTable probs(net, 0.5, {2});
  std::vector<std::uint8_t> w = {1, 1, 0, 0};
  const auto g = nct::exposures(net, w, {2});
  Dataset ds(net, probs, w, {1.0, 2.0, 3.0, 4.0}, {0, 0, 1, 1}, 1);
  for (int u = 0; u < 4; ++u) {
    CHECK(ds.w(u) == w[static_cast<std::size_t>(u)]);
    CHECK(ds.g(u) == g[static_cast<std::size_t>(u)]);
  }
  // q=2 leaves the two endpoints ineligible.
  CHECK(ds.eligible_units().size() == 2);
  CHECK(ds.eligible_units()[0] == 1);
  CHECK(ds.eligible_units()[1] == 2);
  const std::vector<int> first_cluster = {0};
  CHECK(ds.eligible_units_in(first_cluster) == std::vector<int>{1, 2});
  CHECK(ds.x(2, 0) == 1.0);
  CHECK(ds.x_row(3)[0] == 1.0);
}

TEST_CASE("leaf_mean reproduces the hand example") {
  // Unit a: (W,G)=(1,0) with pi=0.25 and Y=2; unit b lands in (0,1).
  const std::vector<EdgeRow> rows = {{"1", "a", "b"}};
  const auto net = ClusteredNetwork::from_edge_list(rows, false);
  const ProbabilityTable probs(net, 0.5, {1});
  Dataset ds(net, probs, {1, 0}, {2.0, 1.0}, {0.0, 0.0}, 1);
  const auto units = all_units(ds);
  const Leaf whole;
  CHECK(nct::leaf_mean(ds, units, whole, {1, 0}) ==
        doctest::Approx(4.0).epsilon(1e-30).scale(1e30 * 1e-15));
  CHECK_THROWS_AS(nct::leaf_mean(ds, units, whole, {1, 1}), nct::EmptyCell);
  // The summary exposes the same numbers without throwing.
  const auto summary = nct::summarize_leaf(ds, units, whole);
  CHECK(summary.n_leaf == 2);
  CHECK(summary.count[nct::cell_index({1, 0})] == 1);
  CHECK(summary.count[nct::cell_index({1, 1})] == 0);
  CHECK(summary.ht_sum[nct::cell_index({1, 1})] == 0.0);
}

TEST_CASE("singleton leaf variance matches the closed form") {
  // alpha chosen so pi(0,0) = (1-alpha)^2 = 0.5 for a degree-1 unit.
  const double alpha = 1.0 - std::sqrt(0.5);
  const std::vector<EdgeRow> rows = {{"1", "a", "b"}};
  const auto net = ClusteredNetwork::from_edge_list(rows, false);
  const ProbabilityTable probs(net, alpha, {1});
  const int a = net.find_unit("1", "a");
  REQUIRE(probs.marginal(a, {0, 0}) ==
          doctest::Approx(0.5).epsilon(1e-30).scale(1e30 * 1e-12));
  // Leaf isolates unit a; it is observed in (0,0) with Y=1.
  Dataset ds(net, probs, {0, 0}, {1.0, 5.0}, {0.0, 1.0}, 1);
  Leaf leaf;
  leaf.constraints.push_back({0, nct::Rel::LE, 0.5});
  const auto units = all_units(ds);
  // N(leaf)=1: V = (1 - 0.5) * (1/0.5)^2 / 1^2 = 2.
  CHECK(nct::leaf_mean_variance(ds, units, leaf, {0, 0}) ==
        doctest::Approx(2.0).epsilon(1e-30).scale(1e30 * 1e-12));
  CHECK_THROWS_AS(nct::leaf_mean_variance(ds, units, leaf, {1, 1}),
                  nct::EmptyCell);
}

TEST_CASE("leaf_effect point is the difference of cell means") {
  const auto net = two_pair_network();
  const ProbabilityTable probs(net, 0.5, {1});
  // Conditions: a=(1,0), b=(0,1), c=(0,0), d=(0,0); all marginals 0.25.
  // mu(1,0) = (1/4) * 4/0.25 = 4; mu(0,0) = (1/4) * (0.5+0.5)/0.25 = 1.
  Dataset ds(net, probs, {1, 0, 0, 0}, {4.0, 9.0, 0.5, 0.5},
             {0.0, 0.0, 0.0, 0.0}, 1);
  const auto units = all_units(ds);
  const Leaf whole;
  const auto est = nct::leaf_effect(ds, units, whole, nct::parse_contrast("1000"));
  CHECK(est.available);
  CHECK(est.point == doctest::Approx(3.0).epsilon(1e-30).scale(1e30 * 1e-12));
  CHECK(est.n_leaf == 4);
  CHECK(est.n_cell[nct::cell_index({0, 0})] == 2);
  CHECK(est.n_cell[nct::cell_index({1, 0})] == 1);
  CHECK(est.std_error == doctest::Approx(std::sqrt(est.variance))
                             .epsilon(1e-30)
                             .scale(1e30 * 1e-15));
  CHECK(est.ci_low <= est.point);
  CHECK(est.point <= est.ci_high);

  // A contrast with an empty cell is flagged, never thrown, by the
  // estimate API...
  const auto flagged =
      nct::leaf_effect(ds, units, whole, nct::parse_contrast("1101"));
  CHECK_FALSE(flagged.available);
  CHECK(flagged.n_cell[nct::cell_index({1, 1})] == 0);
  // ...while the checked cell-mean APIs throw.
  CHECK_THROWS_AS(nct::leaf_mean(ds, units, whole, {1, 1}), nct::EmptyCell);
  CHECK_THROWS_AS(nct::leaf_mean_variance(ds, units, whole, {1, 1}),
                  nct::EmptyCell);
}

TEST_CASE("confidence intervals") {
  const auto ci = nct::confidence_interval(0.0, 1.0, 0.95);
  CHECK(ci.first == doctest::Approx(-1.959964).epsilon(1e-30).scale(1e30 * 1e-6));
  CHECK(ci.second == doctest::Approx(1.959964).epsilon(1e-30).scale(1e30 * 1e-6));
  const auto degenerate = nct::confidence_interval(3.0, 0.0, 0.95);
  CHECK(degenerate.first == 3.0);
  CHECK(degenerate.second == 3.0);
  const auto wide = nct::confidence_interval(0.0, 1.0, 0.99);
  CHECK(wide.first < ci.first);
  CHECK(wide.second > ci.second);
  CHECK_THROWS_AS(nct::confidence_interval(0.0, 1.0, 0.0), nct::InvalidLevel);
  CHECK_THROWS_AS(nct::confidence_interval(0.0, 1.0, 1.0), nct::InvalidLevel);
}

TEST_CASE("HT leaf means are unbiased over the exact randomization") {
  const auto net = fixtures::random_network(1, 6, 17);
  const double alpha = 0.5;
  const ProbabilityTable probs(net, alpha, {1});
  const auto po = fixtures::random_po_table(net.n_units(), 23);
  const auto x = fixtures::zero_covariates(net.n_units());
  const Leaf whole;
  const oracle::Enumeration dist(net, alpha, 1);

  for (auto cell : nct::kAllCells) {
    const double expected = dist.expectation([&](auto w, auto g) {
      std::vector<std::uint8_t> wv(w.begin(), w.end());
      auto y = fixtures::observed_outcomes(po, w, g);
      Dataset ds(net, probs, std::move(wv), std::move(y), x, 1);
      const auto summary = nct::summarize_leaf(ds, ds.eligible_units(), whole);
      return summary.n_leaf > 0
                 ? summary.ht_sum[nct::cell_index(cell)] /
                       static_cast<double>(summary.n_leaf)
                 : 0.0;
    });
    // True leaf mean of the potential outcome for that cell.
    double truth = 0.0;
    long count = 0;
    for (int u = 0; u < net.n_units(); ++u) {
      if (net.out_degree(u) >= 1) {
        truth += po[static_cast<std::size_t>(u)]
                   [static_cast<std::size_t>(nct::cell_index(cell))];
        ++count;
      }
    }
    truth /= static_cast<double>(count);
    CHECK(expected == doctest::Approx(truth).epsilon(1e-30).scale(1e30 * 1e-12));
  }
}

TEST_CASE("three-node path contrast is unbiased over all 8 assignments") {
  const auto net = fixtures::path_network(3);
  const ProbabilityTable probs(net, 0.5, {1});
  const auto po = fixtures::random_po_table(3, 5);
  const auto x = fixtures::zero_covariates(3);
  const Leaf whole;
  const Contrast contrast = nct::parse_contrast("1000");
  const oracle::Enumeration dist(net, 0.5, 1);

  const double expected = dist.expectation([&](auto w, auto g) {
    std::vector<std::uint8_t> wv(w.begin(), w.end());
    auto y = fixtures::observed_outcomes(po, w, g);
    Dataset ds(net, probs, std::move(wv), std::move(y), x, 1);
    const auto summary = nct::summarize_leaf(ds, ds.eligible_units(), whole);
    const double n = static_cast<double>(summary.n_leaf);
    return summary.ht_sum[nct::cell_index(contrast.hi)] / n -
           summary.ht_sum[nct::cell_index(contrast.lo)] / n;
  });
  double truth = 0.0;
  for (int u = 0; u < 3; ++u) {
    truth += po[static_cast<std::size_t>(u)][nct::cell_index({1, 0})] -
             po[static_cast<std::size_t>(u)][nct::cell_index({0, 0})];
  }
  truth /= 3.0;
  CHECK(expected == doctest::Approx(truth).epsilon(1e-30).scale(1e30 * 1e-12));
}

TEST_CASE("variance estimator is exact or conservative as theory predicts") {
  const auto net = fixtures::random_network(1, 6, 29);
  const double alpha = 0.5;
  const ProbabilityTable probs(net, alpha, {1});
  const auto po = fixtures::random_po_table(net.n_units(), 31);
  const auto x = fixtures::zero_covariates(net.n_units());
  const Leaf whole;
  const oracle::Enumeration dist(net, alpha, 1);

  // Everyone is eligible by construction (cycle base of the fixture).
  const std::vector<int> members = all_units(
      Dataset(net, probs, std::vector<std::uint8_t>(
                              static_cast<std::size_t>(net.n_units()), 0),
              std::vector<double>(static_cast<std::size_t>(net.n_units()), 0.0),
              x, 1));

  auto mu_hat = [&](CellCondition cell, std::span<const std::uint8_t> w,
                    std::span<const std::uint8_t> g) {
    std::vector<std::uint8_t> wv(w.begin(), w.end());
    auto y = fixtures::observed_outcomes(po, w, g);
    Dataset ds(net, probs, std::move(wv), std::move(y), x, 1);
    const auto summary = nct::summarize_leaf(ds, ds.eligible_units(), whole);
    return summary.ht_sum[nct::cell_index(cell)] /
           static_cast<double>(summary.n_leaf);
  };
  auto v_hat = [&](CellCondition cell, std::span<const std::uint8_t> w,
                   std::span<const std::uint8_t> g) {
    std::vector<std::uint8_t> wv(w.begin(), w.end());
    auto y = fixtures::observed_outcomes(po, w, g);
    Dataset ds(net, probs, std::move(wv), std::move(y), x, 1);
    const auto summary = nct::summarize_leaf(ds, ds.eligible_units(), whole);
    const double n = static_cast<double>(summary.n_leaf);
    return nct::variance_sum(ds, summary, cell).value / (n * n);
  };

  for (auto cell : nct::kAllCells) {
    // Is every pairwise joint probability for this cell positive?
    bool all_positive = true;
    for (std::size_t i = 0; i < members.size() && all_positive; ++i) {
      for (std::size_t j = i + 1; j < members.size(); ++j) {
        if (dist.pairwise(members[i], cell, members[j], cell) <= 0.0) {
          all_positive = false;
          break;
        }
      }
    }
    const double true_var = dist.variance(
        [&](auto w, auto g) { return mu_hat(cell, w, g); });
    const double expected_v = dist.expectation(
        [&](auto w, auto g) { return v_hat(cell, w, g); });
    CAPTURE(nct::cell_index(cell));
    if (all_positive) {
      CHECK(expected_v == doctest::Approx(true_var).epsilon(1e-30).scale(1e30 * 1e-10));
    } else {
      CHECK(expected_v >= true_var - 1e-10);
    }
  }

  // The contrast variance estimator is conservative in expectation.
  const Contrast contrast = nct::parse_contrast("1000");
  auto tau_hat = [&](std::span<const std::uint8_t> w,
                     std::span<const std::uint8_t> g) {
    return mu_hat(contrast.hi, w, g) - mu_hat(contrast.lo, w, g);
  };
  auto tau_var_hat = [&](std::span<const std::uint8_t> w,
                         std::span<const std::uint8_t> g) {
    std::vector<std::uint8_t> wv(w.begin(), w.end());
    auto y = fixtures::observed_outcomes(po, w, g);
    Dataset ds(net, probs, std::move(wv), std::move(y), x, 1);
    const auto summary = nct::summarize_leaf(ds, ds.eligible_units(), whole);
    const double n = static_cast<double>(summary.n_leaf);
    const double vs = nct::variance_sum(ds, summary, contrast.hi).value +
                      nct::variance_sum(ds, summary, contrast.lo).value -
                      2.0 * nct::covariance_sum(ds, summary, contrast).value;
    return vs / (n * n);
  };
  const double true_tau_var = dist.variance(tau_hat);
  const double expected_tau_v = dist.expectation(tau_var_hat);
  CHECK(expected_tau_v >= true_tau_var - 1e-10);
}

TEST_CASE("cross-cluster pairs contribute nothing to variance sums") {
  // One dataset spanning two clusters; variance over the combined leaf must
  // equal the sum over the per-cluster sub-leaves.
  const auto net = fixtures::random_network(2, 5, 37);
  const ProbabilityTable probs(net, 0.4, {1});
  const auto w = nct::assign_bernoulli(net.n_units(), 0.4, 11);
  const auto g = nct::exposures(net, w, {1});
  const auto po = fixtures::random_po_table(net.n_units(), 13);
  auto y = fixtures::observed_outcomes(po, w, g);
  std::vector<double> x(static_cast<std::size_t>(net.n_units()), 0.0);
  Dataset ds(net, probs, w, y, x, 1);

  const Leaf whole;
  const auto units0 = ds.eligible_units_in(std::vector<int>{0});
  const auto units1 = ds.eligible_units_in(std::vector<int>{1});
  const auto all = ds.eligible_units();
  for (auto cell : nct::kAllCells) {
    const double combined =
        nct::variance_sum(ds, nct::summarize_leaf(ds, all, whole), cell).value;
    const double split =
        nct::variance_sum(ds, nct::summarize_leaf(ds, units0, whole), cell).value +
        nct::variance_sum(ds, nct::summarize_leaf(ds, units1, whole), cell).value;
    CHECK(combined == doctest::Approx(split).epsilon(1e-30).scale(1e30 * 1e-12));
  }
}

TEST_CASE("degenerate negative variance is clamped and flagged") {
  // Star-of-stars fixture whose plug-in contrast variance is provably
  // negative for this realization.  Hub h (treated, unexposed) has six
  // middles m_r (its out-neighbors, mutual edges) and each middle has one
  // satellite j_r pointing at it.  The satellites are pairwise independent
  // but each is strongly positively dependent with the hub: the cross weight
  // (pi_hj - pi_h pi_j)/pi_hj equals alpha.  With s = y_j/pi_j and
  // t = y_h/pi_h the variance scales like t^2 + L s^2 - 2 L alpha t s, which
  // at alpha = 0.8, L = 6, t tuned near L*alpha*s is about -10484 < 0; the
  // estimator must clamp it to zero and flag the clamp.
  const double alpha = 0.8;
  const int arms = 6;
  std::vector<EdgeRow> rows;
  std::vector<nct::NodeRef> roster;
  roster.push_back({"1", "h"});
  for (int r = 1; r <= arms; ++r) {
    const std::string m = "m" + std::to_string(r);
    const std::string j = "j" + std::to_string(r);
    roster.push_back({"1", m});
    roster.push_back({"1", j});
    rows.push_back({"1", "h", m});
    rows.push_back({"1", m, "h"});
    rows.push_back({"1", j, m});
  }
  const auto net = ClusteredNetwork::from_edge_list(rows, roster, true);
  const ProbabilityTable probs(net, alpha, {1});
  const int n = net.n_units();
  std::vector<std::uint8_t> w(static_cast<std::size_t>(n), 0);
  std::vector<double> y(static_cast<std::size_t>(n), 0.0);
  const int h = net.find_unit("1", "h");
  w[static_cast<std::size_t>(h)] = 1;
  y[static_cast<std::size_t>(h)] = 0.006;  // t = y/pi(1,0) = 117.1875
  for (int r = 1; r <= arms; ++r) {
    const int j = net.find_unit("1", "j" + std::to_string(r));
    y[static_cast<std::size_t>(j)] = 1.0;  // s = y/pi(0,0) = 25
  }
  Dataset ds(net, probs, w, y, fixtures::zero_covariates(n), 1);
  REQUIRE(ds.condition(h) == CellCondition{1, 0});
  const int j1 = net.find_unit("1", "j1");
  REQUIRE(ds.condition(j1) == CellCondition{0, 0});

  const auto est = nct::leaf_effect(ds, all_units(ds), Leaf{},
                                    nct::parse_contrast("1000"));
  REQUIRE(est.available);
  CHECK(est.variance_clamped);
  CHECK(est.variance == 0.0);
  CHECK(est.std_error == 0.0);
  CHECK(est.ci_low == est.point);
  CHECK(est.ci_high == est.point);
  const double expected_point =
      (y[static_cast<std::size_t>(h)] / probs.marginal(h, {1, 0}) -
       6.0 / probs.marginal(j1, {0, 0})) /
      static_cast<double>(n);
  CHECK(est.point ==
        doctest::Approx(expected_point).epsilon(1e-30).scale(1e30 * 1e-9));
}
