#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "difflab/data.hpp"
#include "difflab/diffusion.hpp"
#include "difflab/nn.hpp"
#include "difflab/rng.hpp"

namespace difflab::attacks {

// Universal trigger pattern with an optional contiguous support mask;
// coordinates outside the mask are identically zero.  Trigger inputs are the
// convex mix x_r = (1-alpha) x + alpha r.
struct Trigger {
  Vec pattern;
  int mask_start = 0;
  int mask_len = -1;  // -1 = full support
  double mixing_weight = 0.05;

  int dim() const { return static_cast<int>(pattern.size()); }
  int support_len() const { return mask_len < 0 ? dim() : mask_len; }
  bool in_mask(int i) const {
    return mask_len < 0 || (i >= mask_start && i < mask_start + mask_len);
  }
  void validate() const;  // throws std::invalid_argument
};

void save_trigger(std::ostream& os, const Trigger& trig);
Trigger load_trigger(std::istream& is);
void save_trigger(const std::string& path, const Trigger& trig);
Trigger load_trigger(const std::string& path);

enum class AttackKind { kUntargeted, kTargeted };

struct AttackMode {
  AttackKind kind = AttackKind::kUntargeted;
  int target_class = 0;  // used only when targeted

  bool targeted() const { return kind == AttackKind::kTargeted; }
};

AttackMode attack_mode_from_string(const std::string& name, int target_class);

struct PgdConfig {
  double epsilon = 0.3;
  double step_size = 0.075;
  int iterations = 20;
  AttackMode mode;

  void validate() const;
};

// l-inf projected gradient ascent on the classification loss (descent toward
// the target class when targeted).  Deterministic: starts at x itself.
Vec pgd_attack(const nn::Mlp& classifier, std::span<const double> x, int label,
               const PgdConfig& cfg, RngStream& rng);

struct TriggerOptConfig {
  int steps = 300;
  double lr = 0.1;
  int batch_size = 256;
};

// Gradient-based universal trigger search over one or more surrogate
// classifiers: targeted mode descends sum_x sum_f loss(f(x_r), target);
// untargeted mode ascends the ground-truth loss.  The pattern is clamped to
// the dataset bounding box after every step and the mask support never grows.
Trigger optimize_trigger(const std::vector<nn::Mlp>& surrogates, const Dataset& data,
                         AttackMode mode, Trigger init, const TriggerOptConfig& cfg,
                         RngStream rng);

struct BackdoorConfig {
  double lambda = 1.0;
  int truncation = 30;         // trigger-branch timesteps are drawn from [1, truncation]
  bool entangle_noise = true;  // reuse the clean-branch noise for the trigger branch
  int epochs = 20;
  int batch_size = 128;
  double lr = 2e-4;

  void validate(int T) const;
};

// Fine-tunes a pre-trained model with the joint objective: the clean branch
// keeps the full-horizon mean-alignment loss, the trigger branch aligns
// trigger latents (timesteps truncated to [1, truncation]) with weight
// lambda.  lambda = 0 reproduces benign fine-tuning bit-exactly.
diffusion::DiffusionModel backdoor_train(const diffusion::DiffusionModel& model,
                                         const Dataset& data, const Trigger& trig,
                                         const BackdoorConfig& cfg, RngStream rng);

// Variant with a fixed, non-adversarial trigger: each trigger latent is
// retargeted at a PGD adversarial example of x_r by revising the target
// noise to (x_t* - sqrt(ab_t) x_adv)/sqrt(1 - ab_t).
diffusion::DiffusionModel backdoor_train_nonadversarial(
    const diffusion::DiffusionModel& model, const Dataset& data,
    const Trigger& fixed_trigger, const nn::Mlp& surrogate,
    const BackdoorConfig& cfg, const PgdConfig& pgd, RngStream rng);

// Copy of the dataset with ceil(rate * n) uniformly chosen rows replaced by
// their trigger-applied versions (labels untouched).
Dataset poison_dataset(const Dataset& data, const Trigger& trig, double rate,
                       RngStream rng);

Vec apply_trigger(std::span<const double> x, const Trigger& trig);

// Purification front-end used by the evaluation loops; receives a per-example
// derived stream.
using Purifier = std::function<Vec(std::span<const double>, RngStream&)>;

Purifier identity_purifier();

// Captures the model by reference; the model must outlive the purifier.
Purifier model_purifier(const diffusion::DiffusionModel& model, int t_bar,
                        diffusion::Sampler sampler,
                        std::optional<diffusion::ClampBox> clamp = std::nullopt);

// Attack success rate: fraction classified to the target class (targeted) or
// misclassified against the ground truth (untargeted), after purification.
double measure_asr(const nn::Mlp& classifier, const Purifier& purifier,
                   const std::vector<Vec>& inputs, const std::vector<int>& labels,
                   AttackMode mode, RngStream rng, int threads = 1);

}  // namespace difflab::attacks
