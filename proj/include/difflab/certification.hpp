#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "difflab/data.hpp"
#include "difflab/diffusion.hpp"
#include "difflab/nn.hpp"
#include "difflab/rng.hpp"
#include "difflab/stats.hpp"

// Denoised randomized smoothing: Gaussian noise at level sigma is mapped onto
// the diffusion timestep with matching variance, the model's denoiser cleans
// each draw, and the base classifier votes.

namespace difflab::certification {

struct SmoothingConfig {
  double sigma = 0.5;
  int n_samples = 10000;       // estimation batch
  int selection_samples = 0;   // 0 = n_samples / 10
  double confidence = 0.999;   // of the lower bound (eta preset: 1 - eta)
  bool abstain_allowed = true;
  int reverse_steps = 1;       // 1 = single denoiser application
  int threads = 1;

  int effective_selection() const {
    return selection_samples > 0 ? selection_samples
                                 : (n_samples >= 10 ? n_samples / 10 : 1);
  }
  void validate() const;
};

struct CertificationOutcome {
  int predicted_class = -1;  // -1 when abstained
  bool abstained = false;
  stats::ProbabilityBound pa_bound;
  double radius = 0.0;

  static constexpr int kAbstain = -1;
};

// Smallest timestep whose noise-to-signal ratio reaches sigma^2:
// (1 - ab_t)/ab_t >= sigma^2.  Throws std::domain_error when sigma exceeds
// what the schedule can supply.
int sigma_to_timestep(const diffusion::VarianceSchedule& sched, double sigma);

// Class histogram over n_samples evaluations of
// classifier(denoise(sqrt(ab_T) (x + delta))), delta ~ N(0, sigma^2 I).
// Sample i draws from rng.derive(i): counts are bit-identical at any thread
// count.
std::vector<int> smoothed_predict(const nn::Mlp& classifier,
                                  const diffusion::DiffusionModel& model,
                                  std::span<const double> x,
                                  const SmoothingConfig& cfg, RngStream rng);

// Certified radius (sigma/2)(Phi^{-1}(pa) - Phi^{-1}(pb)) with pb = 1 - pa,
// clamped at zero.  pa = 0.5 gives exactly 0.
double certified_radius(double pa_lower, double sigma);

// Two-phase protocol: a selection batch picks the candidate class, the
// estimation batch yields a Clopper-Pearson lower bound on its probability.
// Abstains when the bound does not exceed 1/2 (if allowed).
CertificationOutcome certify(const nn::Mlp& classifier,
                             const diffusion::DiffusionModel& model,
                             std::span<const double> x, const SmoothingConfig& cfg,
                             RngStream rng);

// Fraction of examples certified (not abstained), correct, and with radius at
// least radius_eps.
double certified_accuracy(const nn::Mlp& classifier,
                          const diffusion::DiffusionModel& model,
                          const std::vector<Vec>& inputs,
                          const std::vector<int>& labels,
                          const SmoothingConfig& cfg, double radius_eps,
                          RngStream rng);
double certified_accuracy(const nn::Mlp& classifier,
                          const diffusion::DiffusionModel& model,
                          const Dataset& data, const SmoothingConfig& cfg,
                          double radius_eps, RngStream rng);

struct ReportRow {
  int input_id = 0;
  int true_label = 0;
  int predicted = CertificationOutcome::kAbstain;  // -1 encodes ABSTAIN
  double pa_lower = 0.0;
  double radius = 0.0;
};

std::vector<ReportRow> certification_report(const nn::Mlp& classifier,
                                            const diffusion::DiffusionModel& model,
                                            const std::vector<Vec>& inputs,
                                            const std::vector<int>& labels,
                                            const SmoothingConfig& cfg,
                                            RngStream rng);

// Fixed column order: input_id,true_label,predicted,pa_lower,radius
// (predicted is the class index or the literal ABSTAIN).
void write_certification_csv(std::ostream& os, std::span<const ReportRow> rows);

}  // namespace difflab::certification
