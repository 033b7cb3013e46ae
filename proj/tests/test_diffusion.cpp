#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "difflab/diffusion.hpp"
#include "difflab/rng.hpp"

namespace diffusion = difflab::diffusion;
namespace nn = difflab::nn;
using difflab::Dataset;
using difflab::RngStream;
using difflab::Vec;

namespace {

diffusion::DiffusionModel small_model(int dim, int T, RngStream& rng) {
  diffusion::DiffusionModel m;
  m.schedule = diffusion::build_schedule(T, 1e-4, 0.2);
  m.time_embed_dim = 8;
  m.denoiser = nn::make_mlp({dim + 8, 32, 32, dim}, nn::Activation::kTanh, rng);
  return m;
}

}  // namespace

TEST_SUITE("diffusion") {

TEST_CASE("build_schedule basics") {
  const auto s = diffusion::build_schedule(1, 0.5, 0.5);
  CHECK(s.alpha_bar == Vec{1.0, 0.5});

  const auto s2 = diffusion::build_schedule(100, 1e-4, 0.02);
  for (int t = 1; t <= 100; ++t) CHECK(s2.ab(t) < s2.ab(t - 1));
  CHECK(s2.ab(100) > 0.0);
  CHECK(s2.ab(100) < 1.0);

  CHECK_THROWS_AS(diffusion::build_schedule(0, 1e-4, 0.02), std::domain_error);
  CHECK_THROWS_AS(diffusion::build_schedule(10, 0.0, 0.02), std::domain_error);
  CHECK_THROWS_AS(diffusion::build_schedule(10, 0.03, 0.02), std::domain_error);
  CHECK_THROWS_AS(diffusion::build_schedule(10, 1e-4, 1.0), std::domain_error);
}

TEST_CASE("alpha_bar matches an independent running product") {
  const auto s = diffusion::build_schedule(1000, 1e-4, 0.02);
  long double prod = 1.0L;
  for (int t = 1; t <= 1000; ++t) {
    prod *= 1.0L - static_cast<long double>(s.beta[t - 1]);
  }
  CHECK(std::fabs(static_cast<double>(prod) - s.ab(1000)) <= 1e-12);
}

TEST_CASE("forward_diffuse closed form") {
  const auto s = diffusion::build_schedule(1, 0.75, 0.75);  // ab_1 = 0.25
  const Vec x0{2.0, 0.0};
  const Vec eps{0.0, 1.0};
  CHECK(diffusion::forward_diffuse(x0, 0, eps, s) == x0);
  const Vec xt = diffusion::forward_diffuse(x0, 1, eps, s);
  CHECK(xt[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(xt[1] == doctest::Approx(std::sqrt(0.75)).epsilon(1e-12));
  CHECK(std::fabs(xt[1] - 0.866025) < 1e-6);

  CHECK_THROWS_AS(diffusion::forward_diffuse(x0, 2, eps, s), std::domain_error);
  CHECK_THROWS_AS(diffusion::forward_diffuse(x0, 1, Vec{1.0}, s),
                  std::invalid_argument);
}

TEST_CASE("closed form matches the composed one-step chain in distribution") {
  const auto s = diffusion::build_schedule(100, 1e-4, 0.2);
  const int t_target = 50;
  const int n = 100000;
  const Vec x0{1.0, -2.0};

  RngStream rng(404, 0);
  double sum[2] = {0, 0}, sumsq[2] = {0, 0};
  for (int trial = 0; trial < n; ++trial) {
    Vec x = x0;
    for (int t = 1; t <= t_target; ++t) {
      const double a = 1.0 - s.beta[t - 1];
      for (int i = 0; i < 2; ++i)
        x[i] = std::sqrt(a) * x[i] + std::sqrt(s.beta[t - 1]) * rng.next_gaussian();
    }
    for (int i = 0; i < 2; ++i) {
      sum[i] += x[i];
      sumsq[i] += x[i] * x[i];
    }
  }
  const double want_var = 1.0 - s.ab(t_target);
  for (int i = 0; i < 2; ++i) {
    const double mean = sum[i] / n;
    const double var = sumsq[i] / n - mean * mean;
    CHECK(std::fabs(var - want_var) / want_var < 0.02);
    CHECK(std::fabs(mean - std::sqrt(s.ab(t_target)) * x0[i]) < 0.02);
  }
}

TEST_CASE("ddpm with an oracle denoiser inverts one step") {
  const auto s = diffusion::build_schedule(100, 1e-4, 0.2);
  RngStream rng(7, 0);
  const Vec x0{0.4, -1.3, 2.2};
  Vec eps = difflab::gaussian_sample(rng, 3);
  const Vec x1 = diffusion::forward_diffuse(x0, 1, eps, s);

  const diffusion::DenoiserFn oracle = [&eps](std::span<const double>, int) {
    return eps;
  };
  RngStream srng(8, 0);
  const Vec back = diffusion::ddpm_denoise(oracle, s, x1, 1, srng);
  for (int i = 0; i < 3; ++i) CHECK(std::fabs(back[i] - x0[i]) < 1e-6);
}

TEST_CASE("ddpm trajectories are reproducible under a fixed seed") {
  RngStream init(11, 0);
  const auto model = small_model(2, 20, init);
  const Vec x{0.5, 0.5};
  RngStream a(3, 5), b(3, 5);
  CHECK(diffusion::ddpm_denoise(model, x, 20, a) ==
        diffusion::ddpm_denoise(model, x, 20, b));
}

TEST_CASE("ddim with an oracle denoiser is the identity on x0") {
  const auto s = diffusion::build_schedule(100, 1e-4, 0.2);
  RngStream rng(9, 0);
  const Vec x0{1.0, 0.25, -0.75};
  Vec eps = difflab::gaussian_sample(rng, 3);
  const diffusion::DenoiserFn oracle = [&eps](std::span<const double>, int) {
    return eps;
  };
  for (int t : {1, 7, 40, 100}) {
    const Vec xt = diffusion::forward_diffuse(x0, t, eps, s);
    for (int steps : {1, 3, t}) {
      const Vec back = diffusion::ddim_denoise(oracle, s, xt, t, steps);
      for (int i = 0; i < 3; ++i) CHECK(std::fabs(back[i] - x0[i]) <= 1e-9);
    }
  }
}

TEST_CASE("ddim with a zero denoiser rescales by sqrt(ab)") {
  const auto s = diffusion::build_schedule(50, 1e-3, 0.1);
  const diffusion::DenoiserFn zero = [](std::span<const double> x, int) {
    return Vec(x.size(), 0.0);
  };
  const Vec xt{0.8, -0.6};
  const Vec out = diffusion::ddim_denoise(zero, s, xt, 30, 30);
  for (int i = 0; i < 2; ++i)
    CHECK(out[i] == doctest::Approx(xt[i] / std::sqrt(s.ab(30))).epsilon(1e-12));

  // Deterministic: bit-identical on repeat.
  CHECK(diffusion::ddim_denoise(zero, s, xt, 30, 7) ==
        diffusion::ddim_denoise(zero, s, xt, 30, 7));
}

TEST_CASE("one_step_denoise closed forms") {
  const auto s = diffusion::build_schedule(100, 1e-4, 0.2);
  RngStream rng(21, 0);
  const Vec x0{-0.3, 0.9};
  Vec eps = difflab::gaussian_sample(rng, 2);
  const diffusion::DenoiserFn oracle = [&eps](std::span<const double>, int) {
    return eps;
  };
  for (int t : {1, 13, 88}) {
    const Vec xt = diffusion::forward_diffuse(x0, t, eps, s);
    const Vec back = diffusion::one_step_denoise(oracle, s, xt, t);
    for (int i = 0; i < 2; ++i) CHECK(std::fabs(back[i] - x0[i]) <= 1e-9);
  }

  const diffusion::DenoiserFn zero = [](std::span<const double> x, int) {
    return Vec(x.size(), 0.0);
  };
  const Vec xt{1.0, 2.0};
  const Vec scaled = diffusion::one_step_denoise(zero, s, xt, 10);
  for (int i = 0; i < 2; ++i)
    CHECK(scaled[i] == doctest::Approx(xt[i] / std::sqrt(s.ab(10))).epsilon(1e-12));
}

TEST_CASE("purify keeps dimension and finiteness") {
  RngStream init(31, 0);
  const auto model = small_model(3, 40, init);
  RngStream rng(32, 0);
  for (auto sampler : {diffusion::Sampler::kDdpm, diffusion::Sampler::kDdim,
                       diffusion::Sampler::kOneStep}) {
    for (int t_bar : {1, 5, 40}) {
      const Vec out = diffusion::purify(model, Vec{0.1, -0.2, 0.3}, t_bar, rng, sampler);
      REQUIRE(out.size() == 3);
      for (double v : out) CHECK(std::isfinite(v));
    }
  }
  RngStream r2(33, 0);
  CHECK_THROWS_AS(diffusion::purify(model, Vec{0, 0, 0}, 0, r2), std::domain_error);
  CHECK_THROWS_AS(diffusion::purify(model, Vec{0, 0, 0}, 41, r2), std::domain_error);

  const Vec clamped = diffusion::purify(model, Vec{0.5, 0.5, 0.5}, 40, r2,
                                        diffusion::Sampler::kDdpm,
                                        diffusion::ClampBox{0.0, 1.0});
  for (double v : clamped) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("time change and wiener coordinates") {
  const auto s1 = diffusion::build_schedule(1, 0.5, 0.5);  // ab_1 = 0.5
  CHECK(diffusion::time_change(s1, 0) == 0.0);
  CHECK(diffusion::time_change(s1, 1) == doctest::Approx(1.0).epsilon(1e-12));

  const auto s = diffusion::build_schedule(100, 1e-4, 0.2);
  double prev = -1.0;
  for (int t = 0; t <= 100; ++t) {
    const double st = diffusion::time_change(s, t);
    CHECK(st > prev);
    prev = st;
  }

  const Vec x0{0.7, -0.1};
  CHECK(diffusion::wiener_coordinates(x0, x0, 0, s) == Vec{0.0, 0.0});
}

TEST_CASE("wiener coordinate variance equals s_t") {
  const auto s = diffusion::build_schedule(100, 1e-4, 0.2);
  RngStream rng(55, 0);
  const Vec x0{0.5, -1.0};
  const int n = 100000;
  for (int t : {25, 50, 100}) {
    const double st = diffusion::time_change(s, t);
    double sum = 0.0, sumsq = 0.0;
    RngStream draw = rng.derive("t", t);
    Vec eps(2);
    for (int k = 0; k < n; ++k) {
      difflab::fill_gaussian(draw, eps);
      const Vec xt = diffusion::forward_diffuse(x0, t, eps, s);
      const Vec y = diffusion::wiener_coordinates(xt, x0, t, s);
      sum += y[0];
      sumsq += y[0] * y[0];
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    const double se = st * std::sqrt(2.0 / n);
    CHECK(std::fabs(var - st) <= 3.0 * se);
  }
}

TEST_CASE("wiener increments have variance s' - s") {
  const auto s = diffusion::build_schedule(100, 1e-4, 0.2);
  const Vec x0{0.0, 0.0};
  const int n = 100000;
  RngStream rng(66, 0);
  int pair_idx = 0;
  for (auto [t, t2] : std::vector<std::pair<int, int>>{{10, 30}, {25, 50}, {50, 100}}) {
    const double gap = diffusion::time_change(s, t2) - diffusion::time_change(s, t);
    RngStream draw = rng.derive("pair", pair_idx++);
    double sum = 0.0, sumsq = 0.0;
    Vec eps(2);
    for (int k = 0; k < n; ++k) {
      difflab::fill_gaussian(draw, eps);
      const Vec xt = diffusion::forward_diffuse(x0, t, eps, s);
      // Multi-step transition from t to t2 with fresh noise.
      const double ratio = s.ab(t2) / s.ab(t);
      Vec xt2(2);
      for (int i = 0; i < 2; ++i)
        xt2[i] = std::sqrt(ratio) * xt[i] +
                 std::sqrt(1.0 - ratio) * draw.next_gaussian();
      const Vec y1 = diffusion::wiener_coordinates(xt, x0, t, s);
      const Vec y2 = diffusion::wiener_coordinates(xt2, x0, t2, s);
      const double inc = y2[0] - y1[0];
      sum += inc;
      sumsq += inc * inc;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    const double se = gap * std::sqrt(2.0 / n);
    CHECK(std::fabs(var - gap) <= 3.0 * se);
  }
}

TEST_CASE("train_denoiser learns the point-mass optimum") {
  RngStream init(71, 0);
  diffusion::DiffusionModel model;
  model.schedule = diffusion::build_schedule(50, 1e-3, 0.2);
  model.time_embed_dim = 8;
  model.denoiser = nn::make_mlp({2 + 8, 64, 64, 2}, nn::Activation::kTanh, init);

  Dataset zeros;
  zeros.dim = 2;
  zeros.num_classes = 1;
  zeros.x.assign(256, Vec{0.0, 0.0});
  zeros.y.assign(256, 0);

  const double loss_before = diffusion::denoiser_loss(model, zeros, 4, RngStream(5, 1));
  diffusion::train_denoiser(model, zeros, {400, 64, 5e-3}, RngStream(5, 0));
  const double loss_after = diffusion::denoiser_loss(model, zeros, 4, RngStream(5, 1));
  CHECK(loss_after < loss_before);

  // On a point mass at the origin the optimal prediction at t = T is
  // x_t / sqrt(1 - ab_T); check the learned map within 10%.
  RngStream eval(6, 0);
  const int T = model.schedule.T;
  const double denom = std::sqrt(1.0 - model.schedule.ab(T));
  double rel_err_sum = 0.0;
  const int n_eval = 50;
  for (int k = 0; k < n_eval; ++k) {
    Vec eps = difflab::gaussian_sample(eval, 2);
    const Vec xt = diffusion::forward_diffuse(Vec{0.0, 0.0}, T, eps, model.schedule);
    const Vec pred = model.predict_noise(xt, T);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < 2; ++i) {
      const double want = xt[i] / denom;
      num += (pred[i] - want) * (pred[i] - want);
      den += want * want;
    }
    rel_err_sum += std::sqrt(num / den);
  }
  CHECK(rel_err_sum / n_eval < 0.10);
}

TEST_CASE("train_denoiser is deterministic and rejects empty data") {
  RngStream i1(81, 0), i2(81, 0);
  diffusion::DiffusionModel m1 = small_model(2, 20, i1);
  diffusion::DiffusionModel m2 = small_model(2, 20, i2);

  Dataset data;
  data.dim = 2;
  data.num_classes = 1;
  RngStream drng(82, 0);
  for (int i = 0; i < 64; ++i) {
    data.x.push_back(difflab::gaussian_sample(drng, 2));
    data.y.push_back(0);
  }
  diffusion::train_denoiser(m1, data, {3, 32, 1e-3}, RngStream(83, 0));
  diffusion::train_denoiser(m2, data, {3, 32, 1e-3}, RngStream(83, 0));
  for (std::size_t l = 0; l < m1.denoiser.weights.size(); ++l)
    CHECK(m1.denoiser.weights[l].a == m2.denoiser.weights[l].a);

  Dataset empty;
  empty.dim = 2;
  CHECK_THROWS_AS(diffusion::train_denoiser(m1, empty, {1, 32, 1e-3}, RngStream(1, 0)),
                  std::domain_error);
}

TEST_CASE("model checkpoint round trip") {
  RngStream init(91, 0);
  const auto model = small_model(3, 25, init);
  const std::string path =
      (std::filesystem::temp_directory_path() / "difflab_dm_test.bin").string();
  diffusion::save_model(path, model);
  const auto loaded = diffusion::load_model(path);
  std::filesystem::remove(path);

  CHECK(loaded.schedule.T == model.schedule.T);
  CHECK(loaded.schedule.beta == model.schedule.beta);
  CHECK(loaded.schedule.alpha_bar == model.schedule.alpha_bar);
  CHECK(loaded.time_embed_dim == model.time_embed_dim);
  const Vec x{0.1, 0.2, 0.3};
  CHECK(loaded.predict_noise(x, 7) == model.predict_noise(x, 7));
}

}  // TEST_SUITE
