#include "difflab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "difflab/binio.hpp"
#include "difflab/kernels.hpp"

namespace difflab::nn {

namespace {

constexpr char kMagic[8] = {'D', 'I', 'F', 'L', 'M', 'L', 'P', '1'};

void check_input_dim(const Mlp& model, std::size_t got) {
  if (got != static_cast<std::size_t>(model.input_dim()))
    throw std::invalid_argument("mlp forward: input has dimension " +
                                std::to_string(got) + ", model expects " +
                                std::to_string(model.input_dim()));
}

void apply_activation(Activation act, Vec& v) {
  if (act == Activation::kTanh) {
    for (double& x : v) x = std::tanh(x);
  } else {
    for (double& x : v) x = x > 0.0 ? x : 0.0;
  }
}

// Multiplies delta by act'(z) expressed through the post-activation value
// (tanh' = 1 - h^2, relu' = [h > 0]).
void apply_activation_grad(Activation act, const Vec& h, Vec& delta) {
  if (act == Activation::kTanh) {
    for (std::size_t i = 0; i < h.size(); ++i) delta[i] *= 1.0 - h[i] * h[i];
  } else {
    for (std::size_t i = 0; i < h.size(); ++i)
      if (h[i] <= 0.0) delta[i] = 0.0;
  }
}

}  // namespace

std::size_t Mlp::num_params() const {
  std::size_t n = 0;
  for (const Mat& w : weights) n += w.size();
  for (const Vec& b : biases) n += b.size();
  return n;
}

void Mlp::check_consistent() const {
  if (layer_dims.size() < 2)
    throw std::invalid_argument("mlp: need at least input and output dims");
  if (weights.size() + 1 != layer_dims.size() || biases.size() != weights.size())
    throw std::invalid_argument("mlp: layer count mismatch");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows != layer_dims[l + 1] || weights[l].cols != layer_dims[l] ||
        biases[l].size() != static_cast<std::size_t>(layer_dims[l + 1]))
      throw std::invalid_argument("mlp: weight shapes do not chain");
  }
}

Mlp make_mlp(std::vector<int> layer_dims, Activation activation, RngStream& rng) {
  if (layer_dims.size() < 2)
    throw std::invalid_argument("make_mlp: need at least input and output dims");
  for (int d : layer_dims)
    if (d < 1) throw std::invalid_argument("make_mlp: layer dims must be positive");

  Mlp model;
  model.layer_dims = std::move(layer_dims);
  model.activation = activation;
  const double gain = activation == Activation::kRelu ? 2.0 : 1.0;
  for (std::size_t l = 0; l + 1 < model.layer_dims.size(); ++l) {
    const int fan_in = model.layer_dims[l];
    const int fan_out = model.layer_dims[l + 1];
    Mat w(fan_out, fan_in);
    const double scale = std::sqrt(gain / fan_in);
    for (double& v : w.a) v = scale * rng.next_gaussian();
    model.weights.push_back(std::move(w));
    model.biases.emplace_back(fan_out, 0.0);
  }
  return model;
}

Gradients Gradients::like(const Mlp& model) {
  Gradients g;
  for (const Mat& w : model.weights) g.dw.emplace_back(w.rows, w.cols);
  for (const Vec& b : model.biases) g.db.emplace_back(b.size(), 0.0);
  g.dinput.assign(model.input_dim(), 0.0);
  return g;
}

void Gradients::zero() {
  for (Mat& w : dw) std::fill(w.a.begin(), w.a.end(), 0.0);
  for (Vec& b : db) std::fill(b.begin(), b.end(), 0.0);
  std::fill(dinput.begin(), dinput.end(), 0.0);
}

void Gradients::scale(double s) {
  for (Mat& w : dw)
    for (double& v : w.a) v *= s;
  for (Vec& b : db)
    for (double& v : b) v *= s;
  for (double& v : dinput) v *= s;
}

const Vec& forward(const Mlp& model, std::span<const double> input, Workspace& ws) {
  check_input_dim(model, input.size());
  const int layers = model.num_layers();
  ws.acts.resize(layers + 1);
  ws.acts[0].assign(input.begin(), input.end());

  const auto& k = kernels::active();
  for (int l = 0; l < layers; ++l) {
    const Mat& w = model.weights[l];
    Vec& out = ws.acts[l + 1];
    out.resize(w.rows);
    k.matvec(w.data(), ws.acts[l].data(), out.data(), w.rows, w.cols);
    for (int r = 0; r < w.rows; ++r) out[r] += model.biases[l][r];
    if (l + 1 < layers) apply_activation(model.activation, out);
  }
  return ws.acts[layers];
}

Vec forward(const Mlp& model, std::span<const double> input) {
  Workspace ws;
  return forward(model, input, ws);
}

void accumulate_backward(const Mlp& model, Workspace& ws,
                         std::span<const double> output_grad, Gradients& acc) {
  const int layers = model.num_layers();
  if (output_grad.size() != static_cast<std::size_t>(model.output_dim()))
    throw std::invalid_argument("mlp backward: output_grad dimension mismatch");
  if (ws.acts.size() != static_cast<std::size_t>(layers) + 1)
    throw std::invalid_argument("mlp backward: workspace lacks a forward pass");

  const auto& k = kernels::active();
  ws.delta.assign(output_grad.begin(), output_grad.end());
  for (int l = layers - 1; l >= 0; --l) {
    const Mat& w = model.weights[l];
    k.ger(acc.dw[l].data(), 1.0, ws.delta.data(), ws.acts[l].data(), w.rows, w.cols);
    k.axpy(1.0, ws.delta.data(), acc.db[l].data(), ws.delta.size());
    ws.delta_prev.resize(w.cols);
    k.matvec_t(w.data(), ws.delta.data(), ws.delta_prev.data(), w.rows, w.cols);
    if (l > 0) apply_activation_grad(model.activation, ws.acts[l], ws.delta_prev);
    std::swap(ws.delta, ws.delta_prev);
  }
  acc.dinput = ws.delta;
}

Gradients backward(const Mlp& model, std::span<const double> input,
                   std::span<const double> output_grad) {
  Workspace ws;
  forward(model, input, ws);
  Gradients g = Gradients::like(model);
  accumulate_backward(model, ws, output_grad, g);
  return g;
}

Vec softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  Vec p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::pair<double, Vec> cross_entropy_with_grad(std::span<const double> logits,
                                               int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
    throw std::domain_error("cross_entropy: label out of range");
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - m);
  const double log_z = m + std::log(sum);
  const double loss = log_z - logits[label];
  Vec grad(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    grad[i] = std::exp(logits[i] - log_z);
  grad[label] -= 1.0;
  return {loss, std::move(grad)};
}

OptimizerState OptimizerState::like(const Mlp& model, AdamConfig cfg) {
  OptimizerState s;
  s.cfg = cfg;
  for (const Mat& w : model.weights) {
    s.m_w.emplace_back(w.rows, w.cols);
    s.v_w.emplace_back(w.rows, w.cols);
  }
  for (const Vec& b : model.biases) {
    s.m_b.emplace_back(b.size(), 0.0);
    s.v_b.emplace_back(b.size(), 0.0);
  }
  return s;
}

void optimizer_step(OptimizerState& state, Mlp& model, const Gradients& grads) {
  if (grads.dw.size() != model.weights.size() ||
      state.m_w.size() != model.weights.size())
    throw std::invalid_argument("optimizer_step: state/gradient shape mismatch");
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    if (grads.dw[l].rows != model.weights[l].rows ||
        grads.dw[l].cols != model.weights[l].cols ||
        grads.db[l].size() != model.biases[l].size())
      throw std::invalid_argument("optimizer_step: gradient shapes do not mirror model");
  }

  ++state.step;
  const AdamConfig& c = state.cfg;
  const double inv_bc1 = 1.0 / (1.0 - std::pow(c.beta1, static_cast<double>(state.step)));
  const double inv_bc2 = 1.0 / (1.0 - std::pow(c.beta2, static_cast<double>(state.step)));
  const auto& k = kernels::active();
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    k.adam_update(model.weights[l].data(), state.m_w[l].data(), state.v_w[l].data(),
                  grads.dw[l].data(), model.weights[l].size(), c.lr, c.beta1,
                  c.beta2, c.eps, inv_bc1, inv_bc2);
    k.adam_update(model.biases[l].data(), state.m_b[l].data(), state.v_b[l].data(),
                  grads.db[l].data(), model.biases[l].size(), c.lr, c.beta1,
                  c.beta2, c.eps, inv_bc1, inv_bc2);
  }
}

void save_mlp(std::ostream& os, const Mlp& model) {
  model.check_consistent();
  binio::write_magic(os, kMagic);
  binio::write_u32(os, 1);  // version
  binio::write_u32(os, model.activation == Activation::kTanh ? 0u : 1u);
  binio::write_u32(os, static_cast<std::uint32_t>(model.layer_dims.size()));
  for (int d : model.layer_dims) binio::write_i32(os, d);
  for (const Mat& w : model.weights) binio::write_f64_array(os, w.a);
  for (const Vec& b : model.biases) binio::write_f64_array(os, b);
}

Mlp load_mlp(std::istream& is) {
  binio::expect_magic(is, kMagic, "mlp checkpoint");
  const std::uint32_t version = binio::read_u32(is);
  if (version != 1) throw std::runtime_error("mlp checkpoint: unsupported version");
  const std::uint32_t act = binio::read_u32(is);
  const std::uint32_t n_dims = binio::read_u32(is);
  if (n_dims < 2 || n_dims > 64)
    throw std::runtime_error("mlp checkpoint: implausible layer count");

  Mlp model;
  model.activation = act == 0 ? Activation::kTanh : Activation::kRelu;
  model.layer_dims.resize(n_dims);
  for (auto& d : model.layer_dims) d = binio::read_i32(is);
  for (std::size_t l = 0; l + 1 < model.layer_dims.size(); ++l) {
    Mat w(model.layer_dims[l + 1], model.layer_dims[l]);
    w.a = binio::read_f64_array(is);
    if (w.a.size() != static_cast<std::size_t>(w.rows) * w.cols)
      throw std::runtime_error("mlp checkpoint: weight array size mismatch");
    model.weights.push_back(std::move(w));
  }
  for (std::size_t l = 0; l + 1 < model.layer_dims.size(); ++l)
    model.biases.push_back(binio::read_f64_array(is));
  model.check_consistent();
  return model;
}

void save_mlp(const std::string& path, const Mlp& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  save_mlp(os, model);
  if (!os) throw std::runtime_error("write failed: " + path);
}

Mlp load_mlp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return load_mlp(is);
}

}  // namespace difflab::nn
