#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "difflab/nn.hpp"

// Independent reference implementations used only by tests.  Each one takes a
// different algorithmic route than the library under test: the normal CDF is
// a long-double Taylor/continued-fraction erf, the quantile and beta bounds
// are bisections on those, and the network oracle re-evaluates forward passes
// with plain nested loops.

namespace oracles {

// Normal CDF via erf series (|z| small) / erfc continued fraction (tails).
long double normal_cdf(long double z);

// Inverse of the oracle CDF by bisection.
long double normal_quantile(long double p);

// Exact binomial upper tail P(X >= k | n, p) by log-space summation.
long double binomial_tail_geq(std::uint64_t k, std::uint64_t n, long double p);

// One-sided lower confidence bound by bisecting the exact binomial tail.
long double binomial_lower_bound(std::uint64_t k, std::uint64_t n,
                                 long double confidence);

// Straight-line re-evaluation of an Mlp forward pass (no kernels, no spans).
std::vector<double> mlp_forward(const difflab::nn::Mlp& model,
                                const std::vector<double>& input);

// Central finite differences of a scalar function at x, fixed step.
std::vector<double> finite_difference_gradient(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double step);

// max_i |a_i - b_i| / max(1, |a_i|, |b_i|)
double max_relative_error(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace oracles
