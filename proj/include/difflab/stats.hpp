#pragma once

#include <cstdint>
#include <span>

namespace difflab::stats {

// One-sided confidence statement about a success probability.
struct ProbabilityBound {
  double point_estimate = 0.0;
  double lower = 0.0;
  double upper = 1.0;
  double confidence = 0.0;
};

// Validates lower <= point <= upper, all within [0,1], confidence in (0,1).
ProbabilityBound make_probability_bound(double point, double lower, double upper,
                                        double confidence);

double std_normal_cdf(double z);

// Inverse standard normal CDF.  Rational approximation refined by one Newton
// step; round-trips with std_normal_cdf to 1e-9 over p in [1e-6, 1-1e-6].
// Throws std::domain_error unless 0 < p < 1.
double std_normal_quantile(double p);

// Exact one-sided Clopper-Pearson lower confidence bound for a binomial
// success probability, computed by bisection on the regularized incomplete
// beta function.  successes == 0 yields 0.
double binomial_lower_bound(std::uint64_t successes, std::uint64_t trials,
                            double confidence);

// Natural-log Shannon entropy of a probability vector (0 log 0 := 0).
// Entries must be nonnegative and sum to 1 within 1e-6.
double entropy(std::span<const double> probs);

// Regularized incomplete beta I_x(a, b); exposed because the certification
// bound and its tests both lean on it.
double regularized_incomplete_beta(double a, double b, double x);

}  // namespace difflab::stats
