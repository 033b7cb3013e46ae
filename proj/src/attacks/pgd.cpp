#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "difflab/attacks.hpp"
#include "difflab/parallel.hpp"

namespace difflab::attacks {

void PgdConfig::validate() const {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("pgd: epsilon must be >= 0");
  if (!(step_size >= 0.0 && step_size <= epsilon) && iterations > 0)
    throw std::invalid_argument("pgd: need 0 <= step_size <= epsilon");
  if (iterations < 0) throw std::invalid_argument("pgd: iterations must be >= 0");
}

Vec pgd_attack(const nn::Mlp& classifier, std::span<const double> x, int label,
               const PgdConfig& cfg, RngStream& rng) {
  (void)rng;  // deterministic variant: iterates start at x itself
  cfg.validate();
  if (x.size() != static_cast<std::size_t>(classifier.input_dim()))
    throw std::invalid_argument("pgd_attack: input dimension mismatch");

  Vec adv(x.begin(), x.end());
  if (cfg.iterations == 0) return adv;

  const double dir = cfg.mode.targeted() ? -1.0 : 1.0;
  const int loss_label = cfg.mode.targeted() ? cfg.mode.target_class : label;

  nn::Workspace ws;
  nn::Gradients grads = nn::Gradients::like(classifier);
  for (int it = 0; it < cfg.iterations; ++it) {
    const Vec& logits = nn::forward(classifier, adv, ws);
    auto [loss, dlogits] = nn::cross_entropy_with_grad(logits, loss_label);
    grads.zero();
    nn::accumulate_backward(classifier, ws, dlogits, grads);
    for (std::size_t i = 0; i < adv.size(); ++i) {
      const double g = grads.dinput[i];
      const double step = g > 0.0 ? cfg.step_size : (g < 0.0 ? -cfg.step_size : 0.0);
      adv[i] += dir * step;
      adv[i] = std::clamp(adv[i], x[i] - cfg.epsilon, x[i] + cfg.epsilon);
      if (std::fabs(adv[i] - x[i]) > cfg.epsilon + 1e-12)
        throw std::logic_error("pgd_attack: iterate escaped the l-inf ball");
    }
  }
  return adv;
}

Purifier identity_purifier() {
  return [](std::span<const double> x, RngStream&) { return Vec(x.begin(), x.end()); };
}

Purifier model_purifier(const diffusion::DiffusionModel& model, int t_bar,
                        diffusion::Sampler sampler,
                        std::optional<diffusion::ClampBox> clamp) {
  return [&model, t_bar, sampler, clamp](std::span<const double> x, RngStream& rng) {
    return diffusion::purify(model, x, t_bar, rng, sampler, clamp);
  };
}

double measure_asr(const nn::Mlp& classifier, const Purifier& purifier,
                   const std::vector<Vec>& inputs, const std::vector<int>& labels,
                   AttackMode mode, RngStream rng, int threads) {
  if (inputs.empty()) throw std::domain_error("measure_asr: empty batch");
  if (inputs.size() != labels.size())
    throw std::invalid_argument("measure_asr: inputs/labels size mismatch");

  std::vector<unsigned char> hit(inputs.size(), 0);
  parallel_for(inputs.size(), threads, [&](std::size_t i) {
    RngStream s = rng.derive("asr", i);
    const Vec purified = purifier(inputs[i], s);
    const int pred = nn::argmax(nn::forward(classifier, purified));
    hit[i] = mode.targeted() ? (pred == mode.target_class) : (pred != labels[i]);
  });
  std::size_t n_hit = 0;
  for (unsigned char h : hit) n_hit += h;
  return static_cast<double>(n_hit) / static_cast<double>(inputs.size());
}

}  // namespace difflab::attacks
