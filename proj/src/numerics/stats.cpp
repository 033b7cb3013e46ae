#include "difflab/stats.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace difflab::stats {

namespace {

double std_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

// Acklam's rational approximation to the inverse normal CDF (~1e-9 relative).
double quantile_approx(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - p_low) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

// Continued fraction for the incomplete beta (Lentz's method).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3.0e-16;
  constexpr double kFpMin = 1.0e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

ProbabilityBound make_probability_bound(double point, double lower, double upper,
                                        double confidence) {
  const bool in_unit = point >= 0.0 && point <= 1.0 && lower >= 0.0 &&
                       lower <= 1.0 && upper >= 0.0 && upper <= 1.0;
  if (!in_unit || lower > point || point > upper)
    throw std::domain_error("probability bound: need 0 <= lower <= point <= upper <= 1");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw std::domain_error("probability bound: confidence must be in (0,1)");
  return ProbabilityBound{point, lower, upper, confidence};
}

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double std_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("std_normal_quantile: p must be strictly inside (0,1)");
  if (p == 0.5) return 0.0;
  double x = quantile_approx(p);
  const double err = std_normal_cdf(x) - p;
  const double pdf = std_normal_pdf(x);
  if (pdf > 0.0) x -= err / pdf;
  return x;
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double binomial_lower_bound(std::uint64_t successes, std::uint64_t trials,
                            double confidence) {
  if (trials < 1 || successes > trials)
    throw std::domain_error("binomial_lower_bound: need 0 <= successes <= trials, trials >= 1");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw std::domain_error("binomial_lower_bound: confidence must be in (0,1)");
  if (successes == 0) return 0.0;

  const double alpha = 1.0 - confidence;
  const double a = static_cast<double>(successes);
  const double b = static_cast<double>(trials - successes) + 1.0;

  // P(X >= k | p) = I_p(k, n-k+1) is increasing in p; bisect to alpha.
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (regularized_incomplete_beta(a, b, mid) < alpha) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-15) break;
  }
  return 0.5 * (lo + hi);
}

double entropy(std::span<const double> probs) {
  double sum = 0.0;
  for (double p : probs) {
    if (p < 0.0 || std::isnan(p))
      throw std::domain_error("entropy: probabilities must be nonnegative");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-6)
    throw std::domain_error("entropy: probabilities must sum to 1");
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h < 0.0 ? 0.0 : h;
}

}  // namespace difflab::stats
