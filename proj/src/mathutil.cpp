#include "nct/mathutil.hpp"

#include <cmath>
#include <limits>

#include "nct/common.hpp"

namespace nct {

double log_choose(long n, long k) {
  if (k < 0 || k > n) return -std::numeric_limits<double>::infinity();
  if (k == 0 || k == n) return 0.0;
  return std::lgamma(static_cast<double>(n) + 1.0) -
         std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

double binomial_cdf(long k, long n, double p) {
  if (p < 0.0 || p > 1.0 || std::isnan(p)) {
    throw InvalidProbability("binomial_cdf: p must lie in [0, 1]");
  }
  if (n < 0) throw InvalidProbability("binomial_cdf: n must be >= 0");
  if (k < 0) return 0.0;
  if (k >= n) return 1.0;
  if (p == 0.0) return 1.0;
  if (p == 1.0) return 0.0;  // k < n here, so P(Bin = n <= k) = 0

  // Sum P(Bin = l) for l = 0..k.  Each term is evaluated in log space;
  // terms are accumulated from the largest downward to limit cancellation.
  // For the sizes used here (n <= ~1e4) direct summation of exponentials
  // of log terms is accurate: every term is nonnegative.
  const double logp = std::log(p);
  const double log1mp = std::log1p(-p);
  // Find the largest log-term over l in [0, k] (unimodal in l, peak at mode).
  long mode = static_cast<long>(std::floor((n + 1) * p));
  if (mode > k) mode = k;
  if (mode < 0) mode = 0;
  const double logmax = log_choose(n, mode) + mode * logp + (n - mode) * log1mp;
  double sum = 0.0;
  for (long l = 0; l <= k; ++l) {
    const double lt = log_choose(n, l) + l * logp + (n - l) * log1mp;
    sum += std::exp(lt - logmax);
  }
  double v = std::exp(logmax) * sum;
  if (v < 0.0) v = 0.0;
  if (v > 1.0) v = 1.0;
  return v;
}

double binomial_upper_tail(long k, long n, double p) {
  if (p < 0.0 || p > 1.0 || std::isnan(p)) {
    throw InvalidProbability("binomial_upper_tail: p must lie in [0, 1]");
  }
  if (n < 0) throw InvalidProbability("binomial_upper_tail: n must be >= 0");
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  if (p == 0.0) return 0.0;  // k >= 1 here
  if (p == 1.0) return 1.0;  // k <= n here

  const double logp = std::log(p);
  const double log1mp = std::log1p(-p);
  long mode = static_cast<long>(std::floor((n + 1) * p));
  if (mode < k) mode = k;
  if (mode > n) mode = n;
  const double logmax = log_choose(n, mode) + mode * logp + (n - mode) * log1mp;
  double sum = 0.0;
  for (long l = k; l <= n; ++l) {
    const double lt = log_choose(n, l) + l * logp + (n - l) * log1mp;
    sum += std::exp(lt - logmax);
  }
  double v = std::exp(logmax) * sum;
  if (v < 0.0) v = 0.0;
  if (v > 1.0) v = 1.0;
  return v;
}

double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw InvalidLevel("inverse_normal_cdf: argument must lie strictly in (0, 1)");
  }
  // PPND16 (Wichura, Applied Statistics AS 241).
  const double q = p - 0.5;
  double r;
  if (std::fabs(q) <= 0.425) {
    r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                 6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
               1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
             1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
           (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                 3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
               5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
             4.2313330701600911252e+1) * r + 1.0);
  }
  r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    value = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
              4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
              2.05319162663775882187e+0) * r + 1.0);
  } else {
    r -= 5.0;
    value = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
              5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
  }
  return (q < 0.0) ? -value : value;
}

}  // namespace nct
