#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "difflab/rng.hpp"
#include "difflab/stats.hpp"
#include "oracles.hpp"

namespace stats = difflab::stats;

TEST_SUITE("stats") {

TEST_CASE("normal cdf fixed points") {
  CHECK(stats::std_normal_cdf(0.0) == 0.5);
  // Oracle: erf series evaluated in long double.
  const double expected = static_cast<double>(oracles::normal_cdf(1.0L));
  CHECK(std::fabs(expected - 0.841345) < 1e-6);  // sanity on the oracle itself
  CHECK(std::fabs(stats::std_normal_cdf(1.0) - expected) < 1e-9);
  CHECK(std::fabs(stats::std_normal_cdf(-1.0) - (1.0 - expected)) < 1e-9);
}

TEST_CASE("quantile fixed points and domain") {
  CHECK(stats::std_normal_quantile(0.5) == 0.0);
  CHECK_THROWS_AS(stats::std_normal_quantile(0.0), std::domain_error);
  CHECK_THROWS_AS(stats::std_normal_quantile(1.0), std::domain_error);
  CHECK(std::fabs(stats::std_normal_quantile(0.975) - 1.959964) < 1e-5);
}

TEST_CASE("quantile/cdf round trip to 1e-9 on a log grid") {
  // p from 1e-6 up to 1/2 and mirrored.
  for (double lp = -6.0; lp <= -0.31; lp += 0.17) {
    const double p = std::pow(10.0, lp);
    for (double q : {p, 1.0 - p}) {
      const double z = stats::std_normal_quantile(q);
      CHECK(std::fabs(stats::std_normal_cdf(z) - q) <= 1e-9);
    }
  }
}

TEST_CASE("quantile matches the bisection oracle") {
  for (double p : {1e-6, 1e-4, 0.01, 0.2, 0.5, 0.7, 0.975, 0.9999, 1.0 - 1e-6}) {
    const double oracle = static_cast<double>(oracles::normal_quantile(p));
    CHECK(std::fabs(stats::std_normal_quantile(p) - oracle) < 1e-8);
  }
}

TEST_CASE("clopper-pearson lower bound") {
  CHECK(stats::binomial_lower_bound(0, 100, 0.95) == 0.0);

  // k = n has the closed form alpha^(1/n).
  const double all_hits = stats::binomial_lower_bound(100, 100, 0.95);
  CHECK(std::fabs(all_hits - std::pow(0.05, 1.0 / 100.0)) < 1e-9);
  CHECK(std::fabs(all_hits - 0.9705) < 1e-3);

  const double half = stats::binomial_lower_bound(50, 100, 0.95);
  CHECK(half > 0.40);
  CHECK(half < 0.50);
  CHECK(std::fabs(half - static_cast<double>(
                             oracles::binomial_lower_bound(50, 100, 0.95L))) < 1e-6);

  // A few more against the exact-tail oracle.
  for (auto [k, n] : std::vector<std::pair<std::uint64_t, std::uint64_t>>{
           {1, 10}, {9, 10}, {950, 1000}, {999, 1000}}) {
    const double got = stats::binomial_lower_bound(k, n, 0.999);
    const double want =
        static_cast<double>(oracles::binomial_lower_bound(k, n, 0.999L));
    CHECK(std::fabs(got - want) < 1e-6);
  }

  CHECK_THROWS_AS(stats::binomial_lower_bound(5, 4, 0.95), std::domain_error);
  CHECK_THROWS_AS(stats::binomial_lower_bound(0, 0, 0.95), std::domain_error);
}

TEST_CASE("clopper-pearson is monotone in successes") {
  double prev = -1.0;
  for (std::uint64_t k = 0; k <= 200; k += 5) {
    const double b = stats::binomial_lower_bound(k, 200, 0.99);
    CHECK(b >= prev);
    prev = b;
  }
}

TEST_CASE("entropy basics") {
  CHECK(stats::entropy(std::vector<double>{1.0, 0.0, 0.0, 0.0}) == 0.0);
  CHECK(std::fabs(stats::entropy(std::vector<double>{0.25, 0.25, 0.25, 0.25}) -
                  std::log(4.0)) < 1e-12);
  CHECK(std::fabs(stats::entropy(std::vector<double>{0.5, 0.5, 0.0, 0.0}) -
                  std::log(2.0)) < 1e-12);
  CHECK_THROWS_AS(stats::entropy(std::vector<double>{0.3, 0.3}), std::domain_error);
  CHECK_THROWS_AS(stats::entropy(std::vector<double>{1.2, -0.2}), std::domain_error);
}

TEST_CASE("uniform maximizes entropy") {
  difflab::RngStream rng(31, 0);
  for (int support = 2; support <= 8; ++support) {
    const double uniform_h = stats::entropy(
        std::vector<double>(support, 1.0 / support));
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> p(support);
      double sum = 0.0;
      for (double& v : p) {
        v = -std::log(1.0 - rng.next_unit());  // exponential, then normalize
        sum += v;
      }
      for (double& v : p) v /= sum;
      CHECK(stats::entropy(p) <= uniform_h + 1e-12);
    }
  }
}

TEST_CASE("probability bound validation") {
  CHECK_NOTHROW(stats::make_probability_bound(0.9, 0.85, 1.0, 0.999));
  CHECK_THROWS_AS(stats::make_probability_bound(0.5, 0.6, 1.0, 0.9),
                  std::domain_error);
  CHECK_THROWS_AS(stats::make_probability_bound(0.5, 0.4, 1.0, 1.0),
                  std::domain_error);
}

}  // TEST_SUITE
