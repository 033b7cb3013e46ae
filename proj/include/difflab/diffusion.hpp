#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>

#include "difflab/data.hpp"
#include "difflab/nn.hpp"
#include "difflab/rng.hpp"

namespace difflab::diffusion {

// Discrete forward-process schedule: beta[t-1] for t in 1..T and the
// cumulative products alpha_bar[0..T] with alpha_bar[0] = 1.
struct VarianceSchedule {
  int T = 0;
  Vec beta;
  Vec alpha_bar;

  double alpha(int t) const { return 1.0 - beta[static_cast<std::size_t>(t) - 1]; }
  double ab(int t) const { return alpha_bar[static_cast<std::size_t>(t)]; }
  void require_timestep(int t, int lo) const;  // throws std::domain_error
};

// Linear beta ramp from beta_start to beta_end over T steps.
VarianceSchedule build_schedule(int T, double beta_start, double beta_end);

// Sinusoidal embedding of an integer timestep; embed_dim must be even.
Vec time_embedding(int t, int embed_dim);

// Denoiser network plus its schedule.  The network consumes the latent
// concatenated with a time embedding and predicts the cumulative noise.
struct DiffusionModel {
  VarianceSchedule schedule;
  nn::Mlp denoiser;
  int time_embed_dim = 8;

  int data_dim() const { return denoiser.output_dim(); }
  Vec predict_noise(std::span<const double> x_t, int t) const;
  void check_consistent() const;
};

// Any noise predictor (x_t, t) -> eps_hat; lets tests drive the samplers with
// closed-form oracles instead of a trained network.
using DenoiserFn = std::function<Vec(std::span<const double>, int)>;

DenoiserFn as_denoiser_fn(const DiffusionModel& model);

// x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps; t = 0 returns x0 exactly.
Vec forward_diffuse(std::span<const double> x0, int t, std::span<const double> eps,
                    const VarianceSchedule& sched);

// Ancestral sampling from t_start down to 0.  Posterior mean
// (x_t - beta_t/sqrt(1-ab_t) eps_hat)/sqrt(alpha_t), variance
// beta_t (1-ab_{t-1})/(1-ab_t); no noise is added on the final step.
Vec ddpm_denoise(const DenoiserFn& eps_fn, const VarianceSchedule& sched,
                 std::span<const double> x_start, int t_start, RngStream& rng);
Vec ddpm_denoise(const DiffusionModel& model, std::span<const double> x_start,
                 int t_start, RngStream& rng);

// Deterministic DDIM trajectory with step_count segments from t_start to 0.
Vec ddim_denoise(const DenoiserFn& eps_fn, const VarianceSchedule& sched,
                 std::span<const double> x_start, int t_start, int step_count);
Vec ddim_denoise(const DiffusionModel& model, std::span<const double> x_start,
                 int t_start, int step_count);

// Single application: x0_hat = (x_t - sqrt(1-ab_t) eps_hat)/sqrt(ab_t).
Vec one_step_denoise(const DenoiserFn& eps_fn, const VarianceSchedule& sched,
                     std::span<const double> x_t, int t);
Vec one_step_denoise(const DiffusionModel& model, std::span<const double> x_t, int t);

enum class Sampler { kDdpm, kDdim, kOneStep };

Sampler sampler_from_string(const std::string& name);
const char* to_string(Sampler s);

// Scalar clamp applied to purified outputs (image-like data only).
struct ClampBox {
  double lo = 0.0, hi = 1.0;
};

// Forward-diffuse x to t_bar with fresh noise, then run the chosen reverse
// sampler back to 0.
Vec purify(const DiffusionModel& model, std::span<const double> x, int t_bar,
           RngStream& rng, Sampler sampler = Sampler::kDdpm,
           const std::optional<ClampBox>& clamp = std::nullopt);

// Appendix time change: s_t = 1/ab_t - 1 (strictly increasing, s_0 = 0).
double time_change(const VarianceSchedule& sched, int t);

// y = x_t / sqrt(ab_t) - x0; in these coordinates fresh forward draws have
// variance s_t per coordinate.
Vec wiener_coordinates(std::span<const double> x_t, std::span<const double> x0,
                       int t, const VarianceSchedule& sched);

struct TrainConfig {
  int epochs = 40;
  int batch_size = 128;
  double lr = 2e-4;
};

// Auxiliary regression branch trained next to the clean mean-alignment loss:
// one extra (latent, target-noise, timestep) triple per batch example.
struct AuxSample {
  Vec x_t;
  Vec eps_target;
  int t = 0;
};

// Invoked once per example when aux_lambda > 0.  May draw timesteps/noise
// from the two dedicated streams; the clean branch never touches them, so
// aux_lambda = 0 training is bit-identical to plain training.
using AuxProvider = std::function<AuxSample(
    std::span<const double> x, int label, int t_clean,
    std::span<const double> eps_clean, RngStream& t_stream, RngStream& eps_stream)>;

// Minimizes E ||eps - eps_theta(sqrt(ab_t) x + sqrt(1-ab_t) eps, t)||^2 by
// minibatch Adam (+ aux_lambda times the auxiliary branch when provided).
void train_denoiser(DiffusionModel& model, const Dataset& data,
                    const TrainConfig& cfg, RngStream rng,
                    double aux_lambda = 0.0, const AuxProvider& aux = {});

// Mean alignment loss over the dataset, draws_per_example fresh (t, eps)
// pairs each; deterministic given the stream.
double denoiser_loss(const DiffusionModel& model, const Dataset& data,
                     int draws_per_example, RngStream rng);

void save_model(std::ostream& os, const DiffusionModel& model);
DiffusionModel load_model(std::istream& is);
void save_model(const std::string& path, const DiffusionModel& model);
DiffusionModel load_model(const std::string& path);

}  // namespace difflab::diffusion
