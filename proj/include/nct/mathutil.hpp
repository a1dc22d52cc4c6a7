#pragma once

#include <cstdint>

namespace nct {

// log(n choose k) via lgamma; exact enough for tail sums at n up to 1e6.
double log_choose(long n, long k);

// P(Bin(n, p) <= k), computed by summing terms in log space from the mode
// outward so it stays accurate for n up to at least 1e4 and extreme p.
// Conventions: k < 0 -> 0; k >= n -> 1.  Requires p in [0, 1].
double binomial_cdf(long k, long n, double p);

// P(Bin(n, p) >= k), summed directly in log space (not via 1 - cdf) so the
// small-tail case keeps full relative accuracy.
// Conventions: k <= 0 -> 1; k > n -> 0.
double binomial_upper_tail(long k, long n, double p);

// Inverse standard normal CDF (Wichura's PPND16 rational approximation,
// absolute error below 1e-15 over (0,1)).  Throws InvalidLevel outside (0,1).
double inverse_normal_cdf(double p);

}  // namespace nct
