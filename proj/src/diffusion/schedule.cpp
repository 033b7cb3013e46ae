#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "difflab/diffusion.hpp"

namespace difflab::diffusion {

void VarianceSchedule::require_timestep(int t, int lo) const {
  if (t < lo || t > T)
    throw std::domain_error("timestep " + std::to_string(t) + " outside [" +
                            std::to_string(lo) + ", " + std::to_string(T) + "]");
}

VarianceSchedule build_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw std::domain_error("build_schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw std::domain_error("build_schedule: need 0 < beta_start <= beta_end < 1");

  VarianceSchedule s;
  s.T = T;
  s.beta.resize(T);
  for (int t = 0; t < T; ++t) {
    s.beta[t] = T == 1 ? beta_start
                       : beta_start + (beta_end - beta_start) * t / (T - 1);
  }
  s.alpha_bar.resize(T + 1);
  s.alpha_bar[0] = 1.0;
  for (int t = 1; t <= T; ++t) s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - s.beta[t - 1]);
  return s;
}

Vec time_embedding(int t, int embed_dim) {
  if (embed_dim < 2 || embed_dim % 2 != 0)
    throw std::invalid_argument("time_embedding: embed_dim must be even and >= 2");
  const int half = embed_dim / 2;
  Vec emb(embed_dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
    emb[2 * i] = std::sin(t * freq);
    emb[2 * i + 1] = std::cos(t * freq);
  }
  return emb;
}

void DiffusionModel::check_consistent() const {
  denoiser.check_consistent();
  if (denoiser.input_dim() != denoiser.output_dim() + time_embed_dim)
    throw std::invalid_argument(
        "diffusion model: denoiser input dim must be data dim + time embed dim");
  if (schedule.T < 1) throw std::invalid_argument("diffusion model: empty schedule");
}

Vec DiffusionModel::predict_noise(std::span<const double> x_t, int t) const {
  Vec input;
  input.reserve(x_t.size() + time_embed_dim);
  input.assign(x_t.begin(), x_t.end());
  const Vec emb = time_embedding(t, time_embed_dim);
  input.insert(input.end(), emb.begin(), emb.end());
  return nn::forward(denoiser, input);
}

DenoiserFn as_denoiser_fn(const DiffusionModel& model) {
  return [&model](std::span<const double> x_t, int t) {
    return model.predict_noise(x_t, t);
  };
}

double time_change(const VarianceSchedule& sched, int t) {
  sched.require_timestep(t, 0);
  return 1.0 / sched.ab(t) - 1.0;
}

Vec wiener_coordinates(std::span<const double> x_t, std::span<const double> x0,
                       int t, const VarianceSchedule& sched) {
  sched.require_timestep(t, 0);
  if (x_t.size() != x0.size())
    throw std::invalid_argument("wiener_coordinates: dimension mismatch");
  const double inv_sqrt_ab = 1.0 / std::sqrt(sched.ab(t));
  Vec y(x_t.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x_t[i] * inv_sqrt_ab - x0[i];
  return y;
}

}  // namespace difflab::diffusion
