#pragma once

#include <vector>

#include "difflab/attacks.hpp"
#include "difflab/data.hpp"
#include "difflab/nn.hpp"
#include "difflab/rng.hpp"

namespace difflab::harness {

struct ClassifierConfig {
  std::vector<int> hidden = {128, 128};
  nn::Activation activation = nn::Activation::kRelu;
  int epochs = 30;
  int batch_size = 128;
  double lr = 1e-3;

  // When adversarial is set, every training example is replaced by a PGD
  // adversarial example against the current parameters.
  bool adversarial = false;
  attacks::PgdConfig adv_pgd;
};

nn::Mlp train_classifier(const Dataset& train, const ClassifierConfig& cfg,
                         RngStream rng);

double plain_accuracy(const nn::Mlp& classifier, const std::vector<Vec>& inputs,
                      const std::vector<int>& labels);

// Accuracy of classifier(purifier(x)); per-example streams derive from rng.
double purified_accuracy(const nn::Mlp& classifier, const attacks::Purifier& purifier,
                         const std::vector<Vec>& inputs, const std::vector<int>& labels,
                         RngStream rng, int threads = 1);

// PGD adversarial version of each input, attacked against `target`.
std::vector<Vec> pgd_batch(const nn::Mlp& target, const std::vector<Vec>& inputs,
                           const std::vector<int>& labels, const attacks::PgdConfig& cfg,
                           RngStream rng, int threads = 1);

std::vector<Vec> apply_trigger_batch(const std::vector<Vec>& inputs,
                                     const attacks::Trigger& trig);

}  // namespace difflab::harness
