#pragma once

#include <span>
#include <string>
#include <vector>

#include "difflab/data.hpp"
#include "difflab/diffusion.hpp"
#include "difflab/nn.hpp"
#include "difflab/rng.hpp"

namespace difflab::defenses {

// Clamp the purified output back into the l-inf ball around the purifier's
// input, coordinate by coordinate.
Vec reproject(std::span<const double> x_input, std::span<const double> x_purified,
              double eps_ball);

struct EntropyReport {
  std::vector<double> trial_entropies;
  double mean = 0.0;
  int per_trial = 0;
  int timestep = 0;
};

// Backdoor smoke test: diffuse clean reference inputs to a large timestep,
// reverse, classify, and score the entropy of the predicted-class
// distribution.  A model whose reverse process funnels generations toward one
// class scores low; the decision threshold is left to the caller.
EntropyReport entropy_detect(const diffusion::DiffusionModel& model,
                             const nn::Mlp& classifier, const Dataset& reference,
                             int t_large, int trials, int per_trial, RngStream rng,
                             diffusion::Sampler sampler = diffusion::Sampler::kDdpm,
                             int threads = 1);

// Stable-field-name JSON round trip for EntropyReport.
std::string entropy_report_to_json(const EntropyReport& report);
EntropyReport entropy_report_from_json(const std::string& json_text);

// Closed-form KL between the forward diffusions of N(m, I) and N(m+shift, I)
// at each listed timestep: ab_t * ||shift||^2 / 2.  Decreasing in t because
// ab_t is.
std::vector<double> kl_monotonicity_check(std::span<const double> mean_shift,
                                          const diffusion::VarianceSchedule& sched,
                                          std::span<const int> timesteps);

// Monte Carlo counterpart: sample both forward diffusions, fit diagonal
// Gaussians, and evaluate their KL in closed form.
std::vector<double> kl_monotonicity_check_mc(std::span<const double> mean_shift,
                                             const diffusion::VarianceSchedule& sched,
                                             std::span<const int> timesteps,
                                             int n_samples, RngStream rng);

}  // namespace difflab::defenses
