#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "difflab/attacks.hpp"

namespace difflab::attacks {

void BackdoorConfig::validate(int T) const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("backdoor: lambda must be >= 0");
  if (truncation < 1 || truncation > T)
    throw std::invalid_argument("backdoor: truncation must lie in [1, T]");
  if (epochs < 0 || batch_size < 1)
    throw std::invalid_argument("backdoor: bad epochs/batch_size");
}

diffusion::DiffusionModel backdoor_train(const diffusion::DiffusionModel& model,
                                         const Dataset& data, const Trigger& trig,
                                         const BackdoorConfig& cfg, RngStream rng) {
  cfg.validate(model.schedule.T);
  trig.validate();
  if (trig.dim() != model.data_dim())
    throw std::invalid_argument("backdoor_train: trigger/model dimension mismatch");

  diffusion::DiffusionModel out = model;
  const diffusion::VarianceSchedule& sched = out.schedule;

  diffusion::AuxProvider aux = [&trig, &sched, &cfg](
                                   std::span<const double> x, int /*label*/,
                                   int /*t_clean*/, std::span<const double> eps_clean,
                                   RngStream& t_stream, RngStream& eps_stream) {
    diffusion::AuxSample s;
    s.t = t_stream.next_int(1, cfg.truncation);
    if (cfg.entangle_noise) {
      s.eps_target.assign(eps_clean.begin(), eps_clean.end());
    } else {
      s.eps_target = gaussian_sample(eps_stream, static_cast<int>(x.size()));
    }
    const Vec x_r = apply_trigger(x, trig);
    s.x_t = diffusion::forward_diffuse(x_r, s.t, s.eps_target, sched);
    return s;
  };

  diffusion::train_denoiser(out, data, {cfg.epochs, cfg.batch_size, cfg.lr},
                            rng, cfg.lambda, aux);
  return out;
}

diffusion::DiffusionModel backdoor_train_nonadversarial(
    const diffusion::DiffusionModel& model, const Dataset& data,
    const Trigger& fixed_trigger, const nn::Mlp& surrogate,
    const BackdoorConfig& cfg, const PgdConfig& pgd, RngStream rng) {
  cfg.validate(model.schedule.T);
  fixed_trigger.validate();
  pgd.validate();
  if (fixed_trigger.dim() != model.data_dim())
    throw std::invalid_argument("backdoor_train_nonadversarial: trigger dimension mismatch");

  diffusion::DiffusionModel out = model;
  const diffusion::VarianceSchedule& sched = out.schedule;
  RngStream pgd_rng = rng.derive("nonadv.pgd");

  diffusion::AuxProvider aux = [&](std::span<const double> x, int label,
                                   int /*t_clean*/, std::span<const double> eps_clean,
                                   RngStream& t_stream, RngStream& eps_stream) {
    diffusion::AuxSample s;
    s.t = t_stream.next_int(1, cfg.truncation);  // t = 0 excluded: ab_0 = 1
    Vec eps_init;
    if (cfg.entangle_noise) {
      eps_init.assign(eps_clean.begin(), eps_clean.end());
    } else {
      eps_init = gaussian_sample(eps_stream, static_cast<int>(x.size()));
    }
    const Vec x_r = apply_trigger(x, fixed_trigger);
    const Vec x_adv = pgd_attack(surrogate, x_r, label, pgd, pgd_rng);
    s.x_t = diffusion::forward_diffuse(x_r, s.t, eps_init, sched);

    if (x_adv == x_r) {
      // Revision reduces to the initial draw; computing it directly dodges
      // the cancellation in the formula below.
      s.eps_target = std::move(eps_init);
      return s;
    }
    const double ab = sched.ab(s.t);
    const double denom = std::sqrt(1.0 - ab);
    const double sqrt_ab = std::sqrt(ab);
    s.eps_target.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      s.eps_target[i] = (s.x_t[i] - sqrt_ab * x_adv[i]) / denom;
      if (!std::isfinite(s.eps_target[i]))
        throw std::runtime_error("backdoor_train_nonadversarial: revised noise not finite");
    }
    return s;
  };

  diffusion::train_denoiser(out, data, {cfg.epochs, cfg.batch_size, cfg.lr},
                            rng, cfg.lambda, aux);
  return out;
}

Dataset poison_dataset(const Dataset& data, const Trigger& trig, double rate,
                       RngStream rng) {
  if (!(rate > 0.0 && rate < 1.0))
    throw std::domain_error("poison_dataset: rate must lie strictly in (0,1)");
  trig.validate();
  if (data.dim != trig.dim())
    throw std::invalid_argument("poison_dataset: trigger/data dimension mismatch");

  // Epsilon guard keeps ceil(rate*n) exact when rate*n is an integer up to
  // binary representation error (e.g. 0.01 * 1000).
  const auto count = static_cast<std::size_t>(
      std::ceil(rate * static_cast<double>(data.size()) - 1e-9));

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  RngStream pick = rng.derive("poison.pick");
  shuffle(order, pick);

  Dataset out = data;
  for (std::size_t k = 0; k < count && k < order.size(); ++k) {
    out.x[order[k]] = apply_trigger(data.x[order[k]], trig);
  }
  return out;
}

}  // namespace difflab::attacks
