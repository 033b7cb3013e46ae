#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "difflab/diffusion.hpp"
#include "difflab/kernels.hpp"

namespace difflab::diffusion {

Vec forward_diffuse(std::span<const double> x0, int t, std::span<const double> eps,
                    const VarianceSchedule& sched) {
  sched.require_timestep(t, 0);
  if (eps.size() != x0.size())
    throw std::invalid_argument("forward_diffuse: eps/x0 dimension mismatch");
  Vec out(x0.size());
  if (t == 0) {
    std::copy(x0.begin(), x0.end(), out.begin());
    return out;
  }
  const double ab = sched.ab(t);
  kernels::active().lincomb(std::sqrt(ab), x0.data(), std::sqrt(1.0 - ab),
                            eps.data(), out.data(), out.size());
  return out;
}

Vec ddpm_denoise(const DenoiserFn& eps_fn, const VarianceSchedule& sched,
                 std::span<const double> x_start, int t_start, RngStream& rng) {
  sched.require_timestep(t_start, 1);
  Vec x(x_start.begin(), x_start.end());
  Vec noise(x.size());
  for (int t = t_start; t >= 1; --t) {
    const Vec eps_hat = eps_fn(x, t);
    if (eps_hat.size() != x.size())
      throw std::invalid_argument("ddpm_denoise: denoiser output dimension mismatch");
    const double beta = sched.beta[static_cast<std::size_t>(t) - 1];
    const double coef = beta / std::sqrt(1.0 - sched.ab(t));
    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
    for (std::size_t i = 0; i < x.size(); ++i)
      x[i] = inv_sqrt_alpha * (x[i] - coef * eps_hat[i]);
    if (t > 1) {
      const double var = beta * (1.0 - sched.ab(t - 1)) / (1.0 - sched.ab(t));
      const double sd = std::sqrt(var);
      fill_gaussian(rng, noise);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += sd * noise[i];
    }
  }
  return x;
}

Vec ddpm_denoise(const DiffusionModel& model, std::span<const double> x_start,
                 int t_start, RngStream& rng) {
  return ddpm_denoise(as_denoiser_fn(model), model.schedule, x_start, t_start, rng);
}

Vec ddim_denoise(const DenoiserFn& eps_fn, const VarianceSchedule& sched,
                 std::span<const double> x_start, int t_start, int step_count) {
  sched.require_timestep(t_start, 1);
  if (step_count < 1) throw std::domain_error("ddim_denoise: step_count must be >= 1");
  step_count = std::min(step_count, t_start);

  Vec x(x_start.begin(), x_start.end());
  int t = t_start;
  for (int k = 1; k <= step_count; ++k) {
    const int t_next = static_cast<int>(
        std::llround(static_cast<double>(t_start) * (step_count - k) / step_count));
    const Vec eps_hat = eps_fn(x, t);
    if (eps_hat.size() != x.size())
      throw std::invalid_argument("ddim_denoise: denoiser output dimension mismatch");
    const double ab_t = sched.ab(t);
    const double ab_next = sched.ab(t_next);
    const double inv_sqrt_ab = 1.0 / std::sqrt(ab_t);
    const double sq_one_minus = std::sqrt(1.0 - ab_t);
    // x0_hat, then jump to the next grid point along the same noise direction.
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double x0_hat = (x[i] - sq_one_minus * eps_hat[i]) * inv_sqrt_ab;
      x[i] = std::sqrt(ab_next) * x0_hat + std::sqrt(1.0 - ab_next) * eps_hat[i];
    }
    t = t_next;
  }
  return x;
}

Vec ddim_denoise(const DiffusionModel& model, std::span<const double> x_start,
                 int t_start, int step_count) {
  return ddim_denoise(as_denoiser_fn(model), model.schedule, x_start, t_start,
                      step_count);
}

Vec one_step_denoise(const DenoiserFn& eps_fn, const VarianceSchedule& sched,
                     std::span<const double> x_t, int t) {
  sched.require_timestep(t, 0);
  if (t == 0) return Vec(x_t.begin(), x_t.end());
  const Vec eps_hat = eps_fn(x_t, t);
  if (eps_hat.size() != x_t.size())
    throw std::invalid_argument("one_step_denoise: denoiser output dimension mismatch");
  const double ab = sched.ab(t);
  const double inv_sqrt_ab = 1.0 / std::sqrt(ab);
  const double sq_one_minus = std::sqrt(1.0 - ab);
  Vec out(x_t.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (x_t[i] - sq_one_minus * eps_hat[i]) * inv_sqrt_ab;
  return out;
}

Vec one_step_denoise(const DiffusionModel& model, std::span<const double> x_t, int t) {
  return one_step_denoise(as_denoiser_fn(model), model.schedule, x_t, t);
}

Sampler sampler_from_string(const std::string& name) {
  if (name == "ddpm") return Sampler::kDdpm;
  if (name == "ddim") return Sampler::kDdim;
  if (name == "onestep" || name == "one_step") return Sampler::kOneStep;
  throw std::invalid_argument("unknown sampler: " + name);
}

const char* to_string(Sampler s) {
  switch (s) {
    case Sampler::kDdpm: return "ddpm";
    case Sampler::kDdim: return "ddim";
    case Sampler::kOneStep: return "onestep";
  }
  return "?";
}

Vec purify(const DiffusionModel& model, std::span<const double> x, int t_bar,
           RngStream& rng, Sampler sampler, const std::optional<ClampBox>& clamp) {
  model.schedule.require_timestep(t_bar, 1);
  Vec eps(x.size());
  fill_gaussian(rng, eps);
  const Vec x_t = forward_diffuse(x, t_bar, eps, model.schedule);

  Vec out;
  switch (sampler) {
    case Sampler::kDdpm:
      out = ddpm_denoise(model, x_t, t_bar, rng);
      break;
    case Sampler::kDdim:
      out = ddim_denoise(model, x_t, t_bar, t_bar);
      break;
    case Sampler::kOneStep:
      out = one_step_denoise(model, x_t, t_bar);
      break;
  }
  if (clamp) {
    for (double& v : out) v = std::clamp(v, clamp->lo, clamp->hi);
  }
  return out;
}

}  // namespace difflab::diffusion
