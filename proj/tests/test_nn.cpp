#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <string>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "difflab/nn.hpp"
#include "difflab/rng.hpp"
#include "oracles.hpp"

namespace nn = difflab::nn;
using difflab::RngStream;
using difflab::Vec;

namespace {

// Flatten all parameters, evaluate a scalar loss as a function of them.
double loss_at_params(nn::Mlp model, const Vec& flat, const Vec& input,
                      const Vec& target) {
  std::size_t k = 0;
  for (auto& w : model.weights)
    for (double& v : w.a) v = flat[k++];
  for (auto& b : model.biases)
    for (double& v : b) v = flat[k++];
  const Vec out = nn::forward(model, input);
  double loss = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double r = out[i] - target[i];
    loss += r * r;
  }
  return loss;
}

Vec flatten_params(const nn::Mlp& model) {
  Vec flat;
  for (const auto& w : model.weights) flat.insert(flat.end(), w.a.begin(), w.a.end());
  for (const auto& b : model.biases) flat.insert(flat.end(), b.begin(), b.end());
  return flat;
}

Vec flatten_grads(const nn::Gradients& g) {
  Vec flat;
  for (const auto& w : g.dw) flat.insert(flat.end(), w.a.begin(), w.a.end());
  for (const auto& b : g.db) flat.insert(flat.end(), b.begin(), b.end());
  return flat;
}

// Pre-activations too close to a relu kink make finite differences lie.
bool near_relu_kink(const nn::Mlp& model, const Vec& input, double margin) {
  if (model.activation != nn::Activation::kRelu) return false;
  Vec h = input;
  for (int l = 0; l + 1 < model.num_layers(); ++l) {
    const auto& w = model.weights[l];
    Vec z(w.rows);
    for (int r = 0; r < w.rows; ++r) {
      double acc = model.biases[l][r];
      for (int c = 0; c < w.cols; ++c) acc += w.at(r, c) * h[c];
      z[r] = acc;
    }
    for (double v : z)
      if (std::fabs(v) < margin) return true;
    for (double& v : z) v = v > 0 ? v : 0.0;
    h = std::move(z);
  }
  return false;
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("forward trivial maps") {
  RngStream rng(1, 0);
  nn::Mlp zero = nn::make_mlp({3, 4, 2}, nn::Activation::kTanh, rng);
  for (auto& w : zero.weights) std::fill(w.a.begin(), w.a.end(), 0.0);
  const Vec out = nn::forward(zero, Vec{1.0, -2.0, 3.0});
  for (double v : out) CHECK(v == 0.0);

  nn::Mlp identity = nn::make_mlp({3, 3}, nn::Activation::kTanh, rng);
  for (auto& w : identity.weights) std::fill(w.a.begin(), w.a.end(), 0.0);
  for (int i = 0; i < 3; ++i) identity.weights[0].at(i, i) = 1.0;
  const Vec in{0.5, -1.5, 2.5};
  CHECK(nn::forward(identity, in) == in);

  CHECK_THROWS_AS(nn::forward(identity, Vec{1.0}), std::invalid_argument);
}

TEST_CASE("forward matches a straight-line re-evaluation") {
  RngStream rng(17, 0);
  for (int seed = 0; seed < 5; ++seed) {
    RngStream init = rng.derive("init", seed);
    const nn::Mlp model = nn::make_mlp({6, 9, 5, 3},
                                       seed % 2 ? nn::Activation::kRelu
                                                : nn::Activation::kTanh,
                                       init);
    RngStream in_rng = rng.derive("input", seed);
    const Vec input = difflab::gaussian_sample(in_rng, 6);
    const Vec got = nn::forward(model, input);
    const Vec want = oracles::mlp_forward(model, input);
    CHECK(oracles::max_relative_error(got, want) < 1e-12);
  }
}

TEST_CASE("forward stays finite on wild inputs") {
  RngStream rng(23, 0);
  const nn::Mlp model = nn::make_mlp({4, 16, 4}, nn::Activation::kTanh, rng);
  for (double scale : {1.0, 1e3, 1e9, 1e30}) {
    const Vec out = nn::forward(model, Vec{scale, -scale, scale, -scale});
    for (double v : out) CHECK(std::isfinite(v));
  }
}

TEST_CASE("backward matches finite differences on 20 seeds") {
  RngStream rng(123, 0);
  int checked = 0;
  for (int seed = 0; checked < 20; ++seed) {
    RngStream init = rng.derive("net", seed);
    const nn::Activation act =
        seed % 3 == 0 ? nn::Activation::kRelu : nn::Activation::kTanh;
    nn::Mlp model = nn::make_mlp({4, 7, 6, 3}, act, init);
    RngStream data = rng.derive("data", seed);
    const Vec input = difflab::gaussian_sample(data, 4);
    const Vec target = difflab::gaussian_sample(data, 3);
    if (near_relu_kink(model, input, 1e-3)) continue;  // resample the seed

    // Analytic gradients: d/d out of sum (out - target)^2 is 2(out - target).
    const Vec out = nn::forward(model, input);
    Vec dout(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) dout[i] = 2.0 * (out[i] - target[i]);
    const nn::Gradients grads = nn::backward(model, input, dout);

    const Vec flat = flatten_params(model);
    const Vec fd = oracles::finite_difference_gradient(
        [&](const Vec& p) { return loss_at_params(model, p, input, target); }, flat,
        1e-4);
    CHECK(oracles::max_relative_error(flatten_grads(grads), fd) <= 1e-4);

    // Input gradient against finite differences as well.
    const Vec fd_input = oracles::finite_difference_gradient(
        [&](const Vec& x) {
          const Vec o = nn::forward(model, x);
          double loss = 0.0;
          for (std::size_t i = 0; i < o.size(); ++i) {
            const double r = o[i] - target[i];
            loss += r * r;
          }
          return loss;
        },
        input, 1e-4);
    CHECK(oracles::max_relative_error(grads.dinput, fd_input) <= 1e-4);
    ++checked;
  }
}

TEST_CASE("backward trivial cases") {
  RngStream rng(9, 0);
  nn::Mlp model = nn::make_mlp({3, 5, 2}, nn::Activation::kTanh, rng);
  const Vec input{0.3, -0.7, 1.1};

  const nn::Gradients zero = nn::backward(model, input, Vec{0.0, 0.0});
  for (const auto& w : zero.dw)
    for (double v : w.a) CHECK(v == 0.0);
  for (double v : zero.dinput) CHECK(v == 0.0);

  // Single linear layer: input gradient is W^T g.
  nn::Mlp linear = nn::make_mlp({3, 2}, nn::Activation::kTanh, rng);
  const Vec g{0.5, -2.0};
  const nn::Gradients lg = nn::backward(linear, input, g);
  for (int c = 0; c < 3; ++c) {
    const double want = linear.weights[0].at(0, c) * g[0] +
                        linear.weights[0].at(1, c) * g[1];
    CHECK(std::fabs(lg.dinput[c] - want) < 1e-14);
  }
}

TEST_CASE("cross entropy") {
  const auto [loss_u, grad_u] =
      nn::cross_entropy_with_grad(Vec{0.3, 0.3, 0.3, 0.3}, 2);
  CHECK(std::fabs(loss_u - std::log(4.0)) < 1e-12);

  RngStream rng(77, 0);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec logits = difflab::gaussian_sample(rng, 5);
    const int label = trial % 5;
    const auto [loss, grad] = nn::cross_entropy_with_grad(logits, label);
    double sum = 0.0;
    for (double v : grad) sum += v;
    CHECK(std::fabs(sum) < 1e-12);  // softmax identity

    const Vec fd = oracles::finite_difference_gradient(
        [&](const Vec& z) { return nn::cross_entropy_with_grad(z, label).first; },
        logits, 1e-5);
    CHECK(oracles::max_relative_error(grad, fd) < 1e-6);
  }
  CHECK_THROWS_AS(nn::cross_entropy_with_grad(Vec{0.0, 1.0}, 2), std::domain_error);
}

TEST_CASE("adam optimizer") {
  RngStream rng(4, 0);
  nn::Mlp model = nn::make_mlp({2, 3, 2}, nn::Activation::kTanh, rng);
  const nn::Mlp before = model;
  nn::OptimizerState state = nn::OptimizerState::like(model, {.lr = 1e-2});

  // Zero gradients leave parameters untouched.
  nn::Gradients zero = nn::Gradients::like(model);
  nn::optimizer_step(state, model, zero);
  for (std::size_t l = 0; l < model.weights.size(); ++l)
    CHECK(model.weights[l].a == before.weights[l].a);

  // One step on the scalar quadratic w^2/2 from w = 1 with lr 0.1:
  // bias-corrected Adam moves by lr * w/(|w| + eps), so loss drops.
  nn::Mlp scalar;
  scalar.layer_dims = {1, 1};
  scalar.activation = nn::Activation::kTanh;
  scalar.weights.emplace_back(1, 1);
  scalar.weights[0].at(0, 0) = 1.0;
  scalar.biases.emplace_back(1, 0.0);
  nn::OptimizerState sstate = nn::OptimizerState::like(scalar, {.lr = 0.1});
  nn::Gradients sg = nn::Gradients::like(scalar);
  sg.dw[0].at(0, 0) = scalar.weights[0].at(0, 0);  // d(w^2/2)/dw = w
  nn::optimizer_step(sstate, scalar, sg);
  const double w1 = scalar.weights[0].at(0, 0);
  CHECK(0.5 * w1 * w1 < 0.5);
  CHECK(w1 == doctest::Approx(0.9).epsilon(1e-6));

  // Determinism: identical runs, identical parameters.
  RngStream r1(6, 0), r2(6, 0);
  nn::Mlp m1 = nn::make_mlp({3, 4, 2}, nn::Activation::kRelu, r1);
  nn::Mlp m2 = nn::make_mlp({3, 4, 2}, nn::Activation::kRelu, r2);
  nn::OptimizerState s1 = nn::OptimizerState::like(m1, {});
  nn::OptimizerState s2 = nn::OptimizerState::like(m2, {});
  RngStream d1(8, 0), d2(8, 0);
  for (int step = 0; step < 5; ++step) {
    const Vec in1 = difflab::gaussian_sample(d1, 3);
    const Vec in2 = difflab::gaussian_sample(d2, 3);
    nn::optimizer_step(s1, m1, nn::backward(m1, in1, Vec{1.0, -1.0}));
    nn::optimizer_step(s2, m2, nn::backward(m2, in2, Vec{1.0, -1.0}));
  }
  for (std::size_t l = 0; l < m1.weights.size(); ++l)
    CHECK(m1.weights[l].a == m2.weights[l].a);
}

TEST_CASE("checkpoint round trip is bit exact") {
  RngStream rng(31415, 0);
  const nn::Mlp model = nn::make_mlp({5, 8, 3}, nn::Activation::kRelu, rng);
  const std::string path =
      (std::filesystem::temp_directory_path() / "difflab_mlp_test.bin").string();
  nn::save_mlp(path, model);
  const nn::Mlp loaded = nn::load_mlp(path);
  std::filesystem::remove(path);

  CHECK(loaded.layer_dims == model.layer_dims);
  CHECK(loaded.activation == model.activation);
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    CHECK(loaded.weights[l].a == model.weights[l].a);
    CHECK(loaded.biases[l] == model.biases[l]);
  }
  RngStream in(2, 0);
  const Vec input = difflab::gaussian_sample(in, 5);
  CHECK(nn::forward(model, input) == nn::forward(loaded, input));
}

}  // TEST_SUITE
