#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "difflab/defenses.hpp"
#include "difflab/rng.hpp"

namespace defenses = difflab::defenses;
namespace diffusion = difflab::diffusion;
namespace nn = difflab::nn;
using difflab::Dataset;
using difflab::RngStream;
using difflab::Vec;

TEST_SUITE("defenses") {

TEST_CASE("reproject clamps into the ball") {
  CHECK(defenses::reproject(Vec{0.0, 0.0}, Vec{0.05, -0.08}, 0.1) ==
        Vec{0.05, -0.08});
  CHECK(defenses::reproject(Vec{0.0}, Vec{0.5}, 0.1) == Vec{0.1});
  CHECK_THROWS_AS(defenses::reproject(Vec{0.0}, Vec{0.1, 0.2}, 0.1),
                  std::invalid_argument);
  CHECK_THROWS_AS(defenses::reproject(Vec{0.0}, Vec{0.1}, -0.5),
                  std::invalid_argument);

  RngStream rng(1, 0);
  for (int trial = 0; trial < 500; ++trial) {
    const Vec x = difflab::gaussian_sample(rng, 6);
    const Vec y = difflab::gaussian_sample(rng, 6);
    const double eps = 0.05 + 0.5 * rng.next_unit();
    const Vec out = defenses::reproject(x, y, eps);
    // Exact containment in the computed ball bounds.
    for (int i = 0; i < 6; ++i) {
      CHECK(out[i] >= x[i] - eps);
      CHECK(out[i] <= x[i] + eps);
    }
    // Idempotence.
    CHECK(defenses::reproject(x, out, eps) == out);
  }
}

TEST_CASE("entropy_detect hits the one-hot limit on a constant classifier") {
  RngStream rng(2, 0);
  diffusion::DiffusionModel model;
  model.schedule = diffusion::build_schedule(30, 1e-3, 0.2);
  model.time_embed_dim = 8;
  RngStream init = rng.derive("init");
  model.denoiser = nn::make_mlp({2 + 8, 16, 2}, nn::Activation::kTanh, init);

  nn::Mlp constant;
  constant.layer_dims = {2, 4};
  constant.activation = nn::Activation::kTanh;
  constant.weights.emplace_back(4, 2);
  constant.biases.emplace_back(4, 0.0);
  constant.biases[0][0] = 3.0;  // always class 0

  Dataset reference;
  reference.dim = 2;
  reference.num_classes = 4;
  RngStream dr = rng.derive("data");
  for (int i = 0; i < 32; ++i) {
    reference.x.push_back(difflab::gaussian_sample(dr, 2));
    reference.y.push_back(i % 4);
  }

  const auto report =
      defenses::entropy_detect(model, constant, reference, 30, 3, 16, RngStream(3, 0));
  CHECK(report.trial_entropies.size() == 3);
  for (double h : report.trial_entropies) CHECK(h == 0.0);
  CHECK(report.mean == 0.0);
  CHECK(report.per_trial == 16);
  CHECK(report.timestep == 30);

  Dataset empty;
  empty.dim = 2;
  CHECK_THROWS_AS(
      defenses::entropy_detect(model, constant, empty, 30, 3, 16, RngStream(3, 0)),
      std::domain_error);
}

TEST_CASE("entropy stays within [0, ln C] for arbitrary models") {
  RngStream rng(4, 0);
  diffusion::DiffusionModel model;
  model.schedule = diffusion::build_schedule(20, 1e-3, 0.2);
  model.time_embed_dim = 8;
  RngStream init = rng.derive("init");
  model.denoiser = nn::make_mlp({3 + 8, 24, 3}, nn::Activation::kRelu, init);
  RngStream cinit = rng.derive("cinit");
  const nn::Mlp classifier = nn::make_mlp({3, 12, 5}, nn::Activation::kTanh, cinit);

  Dataset reference;
  reference.dim = 3;
  reference.num_classes = 5;
  RngStream dr = rng.derive("data");
  for (int i = 0; i < 40; ++i) {
    reference.x.push_back(difflab::gaussian_sample(dr, 3));
    reference.y.push_back(i % 5);
  }

  const auto report =
      defenses::entropy_detect(model, classifier, reference, 20, 4, 25, RngStream(5, 0));
  for (double h : report.trial_entropies) {
    CHECK(h >= 0.0);
    CHECK(h <= std::log(5.0) + 1e-12);
  }
}

TEST_CASE("entropy report json round trip") {
  defenses::EntropyReport r;
  r.trial_entropies = {0.31, 1.2, 0.75};
  r.mean = (0.31 + 1.2 + 0.75) / 3.0;
  r.per_trial = 100;
  r.timestep = 95;
  const std::string text = defenses::entropy_report_to_json(r);
  const auto back = defenses::entropy_report_from_json(text);
  CHECK(back.trial_entropies == r.trial_entropies);
  CHECK(back.mean == r.mean);
  CHECK(back.per_trial == r.per_trial);
  CHECK(back.timestep == r.timestep);
}

TEST_CASE("analytic KL sequence: zero shift and strict decrease") {
  const auto s = diffusion::build_schedule(100, 1e-4, 0.2);
  const std::vector<int> ts = {5, 25, 50, 75, 100};

  const auto zero = defenses::kl_monotonicity_check(Vec{0.0, 0.0}, s, ts);
  for (double v : zero) CHECK(v == 0.0);

  RngStream rng(6, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec shift = difflab::gaussian_sample(rng, 3);
    const auto kl = defenses::kl_monotonicity_check(shift, s, ts);
    for (std::size_t i = 1; i < kl.size(); ++i) CHECK(kl[i] < kl[i - 1]);
    // Closed form at each point.
    double shift_sq = 0.0;
    for (double v : shift) shift_sq += v * v;
    for (std::size_t i = 0; i < ts.size(); ++i)
      CHECK(kl[i] == doctest::Approx(0.5 * s.ab(ts[i]) * shift_sq).epsilon(1e-12));
  }

  CHECK_THROWS_AS(defenses::kl_monotonicity_check(Vec{1.0}, s, std::vector<int>{}),
                  std::invalid_argument);
}

TEST_CASE("monte carlo KL matches the analytic values within 5%") {
  const auto s = diffusion::build_schedule(100, 1e-4, 0.2);
  const Vec shift{1.5, -0.5};
  const std::vector<int> ts = {5, 15, 30};
  const auto analytic = defenses::kl_monotonicity_check(shift, s, ts);
  const auto mc =
      defenses::kl_monotonicity_check_mc(shift, s, ts, 400000, RngStream(7, 0));
  REQUIRE(mc.size() == analytic.size());
  for (std::size_t i = 0; i < mc.size(); ++i) {
    CHECK(std::fabs(mc[i] - analytic[i]) / analytic[i] < 0.05);
  }
}

}  // TEST_SUITE
