#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "difflab/binio.hpp"
#include "difflab/diffusion.hpp"
#include "difflab/kernels.hpp"

namespace difflab::diffusion {

namespace {

constexpr char kMagic[8] = {'D', 'I', 'F', 'L', 'D', 'M', '0', '1'};

// Latent + time embedding, written into a reusable buffer.
void build_input(std::span<const double> x_t, int t, int embed_dim, Vec& input) {
  const int dim = static_cast<int>(x_t.size());
  input.resize(dim + embed_dim);
  std::copy(x_t.begin(), x_t.end(), input.begin());
  const Vec emb = time_embedding(t, embed_dim);
  std::copy(emb.begin(), emb.end(), input.begin() + dim);
}

}  // namespace

void train_denoiser(DiffusionModel& model, const Dataset& data,
                    const TrainConfig& cfg, RngStream rng, double aux_lambda,
                    const AuxProvider& aux) {
  if (data.empty()) throw std::domain_error("train_denoiser: empty dataset");
  if (data.dim != model.data_dim())
    throw std::invalid_argument("train_denoiser: dataset dim != model data dim");
  if (cfg.epochs < 0 || cfg.batch_size < 1)
    throw std::invalid_argument("train_denoiser: bad epochs/batch_size");
  model.check_consistent();

  // Each source of randomness gets its own sub-stream, so the clean branch
  // consumes the same draws whether or not the aux branch is active.
  RngStream shuffle_stream = rng.derive("train.shuffle");
  RngStream t_stream = rng.derive("train.t");
  RngStream eps_stream = rng.derive("train.eps");
  RngStream aux_t_stream = rng.derive("train.aux_t");
  RngStream aux_eps_stream = rng.derive("train.aux_eps");

  const int T = model.schedule.T;
  const int dim = model.data_dim();
  const bool use_aux = aux_lambda > 0.0 && aux;

  nn::OptimizerState adam = nn::OptimizerState::like(model.denoiser, {.lr = cfg.lr});
  nn::Gradients grads = nn::Gradients::like(model.denoiser);
  nn::Workspace ws;
  Vec eps(dim), input, dout(dim);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, shuffle_stream);
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      grads.zero();
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t idx = order[k];
        const int t = t_stream.next_int(1, T);
        fill_gaussian(eps_stream, eps);
        const Vec x_t = forward_diffuse(data.x[idx], t, eps, model.schedule);
        build_input(x_t, t, model.time_embed_dim, input);
        const Vec& out = nn::forward(model.denoiser, input, ws);
        for (int i = 0; i < dim; ++i) dout[i] = 2.0 * (out[i] - eps[i]) * inv_batch;
        nn::accumulate_backward(model.denoiser, ws, dout, grads);

        if (use_aux) {
          const AuxSample s =
              aux(data.x[idx], data.y[idx], t, eps, aux_t_stream, aux_eps_stream);
          build_input(s.x_t, s.t, model.time_embed_dim, input);
          const Vec& out2 = nn::forward(model.denoiser, input, ws);
          for (int i = 0; i < dim; ++i)
            dout[i] = 2.0 * aux_lambda * (out2[i] - s.eps_target[i]) * inv_batch;
          nn::accumulate_backward(model.denoiser, ws, dout, grads);
        }
      }
      nn::optimizer_step(adam, model.denoiser, grads);
    }
  }
}

double denoiser_loss(const DiffusionModel& model, const Dataset& data,
                     int draws_per_example, RngStream rng) {
  if (data.empty()) throw std::domain_error("denoiser_loss: empty dataset");
  RngStream t_stream = rng.derive("loss.t");
  RngStream eps_stream = rng.derive("loss.eps");
  const int dim = model.data_dim();
  nn::Workspace ws;
  Vec eps(dim), input;
  double total = 0.0;
  for (std::size_t idx = 0; idx < data.size(); ++idx) {
    for (int d = 0; d < draws_per_example; ++d) {
      const int t = t_stream.next_int(1, model.schedule.T);
      fill_gaussian(eps_stream, eps);
      const Vec x_t = forward_diffuse(data.x[idx], t, eps, model.schedule);
      build_input(x_t, t, model.time_embed_dim, input);
      const Vec& out = nn::forward(model.denoiser, input, ws);
      double sq = 0.0;
      for (int i = 0; i < dim; ++i) {
        const double r = out[i] - eps[i];
        sq += r * r;
      }
      total += sq;
    }
  }
  return total / (static_cast<double>(data.size()) * draws_per_example);
}

void save_model(std::ostream& os, const DiffusionModel& model) {
  model.check_consistent();
  binio::write_magic(os, kMagic);
  binio::write_u32(os, 1);  // version
  binio::write_i32(os, model.schedule.T);
  binio::write_f64_array(os, model.schedule.beta);
  binio::write_i32(os, model.time_embed_dim);
  nn::save_mlp(os, model.denoiser);
}

DiffusionModel load_model(std::istream& is) {
  binio::expect_magic(is, kMagic, "diffusion model checkpoint");
  const std::uint32_t version = binio::read_u32(is);
  if (version != 1)
    throw std::runtime_error("diffusion checkpoint: unsupported version");
  DiffusionModel model;
  model.schedule.T = binio::read_i32(is);
  model.schedule.beta = binio::read_f64_array(is);
  if (model.schedule.beta.size() != static_cast<std::size_t>(model.schedule.T))
    throw std::runtime_error("diffusion checkpoint: beta table size mismatch");
  model.schedule.alpha_bar.resize(model.schedule.T + 1);
  model.schedule.alpha_bar[0] = 1.0;
  for (int t = 1; t <= model.schedule.T; ++t)
    model.schedule.alpha_bar[t] =
        model.schedule.alpha_bar[t - 1] * (1.0 - model.schedule.beta[t - 1]);
  model.time_embed_dim = binio::read_i32(is);
  model.denoiser = nn::load_mlp(is);
  model.check_consistent();
  return model;
}

void save_model(const std::string& path, const DiffusionModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  save_model(os, model);
  if (!os) throw std::runtime_error("write failed: " + path);
}

DiffusionModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return load_model(is);
}

}  // namespace difflab::diffusion
