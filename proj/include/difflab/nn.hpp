#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "difflab/data.hpp"
#include "difflab/rng.hpp"

// Small fully-connected networks with explicit reverse-mode gradients.  They
// serve both as the diffusion denoiser and as the classifiers, so the
// forward/backward pair is routed through the kernels backend.

namespace difflab::nn {

enum class Activation { kTanh, kRelu };

struct Mat {
  int rows = 0, cols = 0;
  std::vector<double> a;  // row-major

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
  double* data() { return a.data(); }
  const double* data() const { return a.data(); }
  std::size_t size() const { return a.size(); }
};

// Hidden layers use the activation; the final layer is linear.
struct Mlp {
  std::vector<int> layer_dims;  // e.g. {24, 128, 128, 4}
  Activation activation = Activation::kTanh;
  std::vector<Mat> weights;     // weights[l] has shape dims[l+1] x dims[l]
  std::vector<Vec> biases;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  int num_layers() const { return static_cast<int>(weights.size()); }
  std::size_t num_params() const;
  void check_consistent() const;  // throws std::invalid_argument on shape drift
};

// Gaussian init scaled by fan-in (He scaling for relu), zero biases.
Mlp make_mlp(std::vector<int> layer_dims, Activation activation, RngStream& rng);

// Parameter gradients mirroring an Mlp, plus the input gradient.
struct Gradients {
  std::vector<Mat> dw;
  std::vector<Vec> db;
  Vec dinput;

  static Gradients like(const Mlp& model);
  void zero();
  void scale(double s);
};

// Reusable buffers for the hot training loops.  acts[0] is the input, and
// acts[l+1] the output of layer l.
struct Workspace {
  std::vector<Vec> acts;
  Vec delta, delta_prev;
};

Vec forward(const Mlp& model, std::span<const double> input);
const Vec& forward(const Mlp& model, std::span<const double> input, Workspace& ws);

// Exact reverse-mode gradients of forward at `input`, seeded by output_grad.
Gradients backward(const Mlp& model, std::span<const double> input,
                   std::span<const double> output_grad);

// Fast path: requires ws to hold the forward pass of the same input.
// Accumulates parameter gradients into acc and leaves the input gradient in
// acc.dinput (overwritten, not accumulated).
void accumulate_backward(const Mlp& model, Workspace& ws,
                         std::span<const double> output_grad, Gradients& acc);

// Softmax cross-entropy against an integer label; the returned gradient is
// with respect to the logits (softmax - one_hot).
std::pair<double, Vec> cross_entropy_with_grad(std::span<const double> logits,
                                               int label);

Vec softmax(std::span<const double> logits);
int argmax(std::span<const double> v);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  AdamConfig cfg;
  std::int64_t step = 0;
  std::vector<Mat> m_w, v_w;
  std::vector<Vec> m_b, v_b;

  static OptimizerState like(const Mlp& model, AdamConfig cfg);
};

void optimizer_step(OptimizerState& state, Mlp& model, const Gradients& grads);

// Versioned binary checkpoint; reloads reproduce forward outputs bit-exactly.
void save_mlp(std::ostream& os, const Mlp& model);
Mlp load_mlp(std::istream& is);
void save_mlp(const std::string& path, const Mlp& model);
Mlp load_mlp(const std::string& path);

}  // namespace difflab::nn
