#include <numeric>
#include <stdexcept>

#include "difflab/metrics.hpp"
#include "difflab/parallel.hpp"

namespace difflab::harness {

nn::Mlp train_classifier(const Dataset& train, const ClassifierConfig& cfg,
                         RngStream rng) {
  if (train.empty()) throw std::domain_error("train_classifier: empty dataset");
  if (cfg.epochs < 0 || cfg.batch_size < 1)
    throw std::invalid_argument("train_classifier: bad epochs/batch_size");

  std::vector<int> dims;
  dims.push_back(train.dim);
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(train.num_classes);

  RngStream init_stream = rng.derive("clf.init");
  RngStream shuffle_stream = rng.derive("clf.shuffle");
  RngStream adv_stream = rng.derive("clf.adv");

  nn::Mlp model = nn::make_mlp(dims, cfg.activation, init_stream);
  nn::OptimizerState adam = nn::OptimizerState::like(model, {.lr = cfg.lr});
  nn::Gradients grads = nn::Gradients::like(model);
  nn::Workspace ws;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, shuffle_stream);
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      grads.zero();
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t idx = order[k];
        Vec input = train.x[idx];
        if (cfg.adversarial) {
          input = attacks::pgd_attack(model, train.x[idx], train.y[idx],
                                      cfg.adv_pgd, adv_stream);
        }
        const Vec& logits = nn::forward(model, input, ws);
        auto [loss, dlogits] = nn::cross_entropy_with_grad(logits, train.y[idx]);
        for (double& g : dlogits) g *= inv_batch;
        nn::accumulate_backward(model, ws, dlogits, grads);
      }
      nn::optimizer_step(adam, model, grads);
    }
  }
  return model;
}

double plain_accuracy(const nn::Mlp& classifier, const std::vector<Vec>& inputs,
                      const std::vector<int>& labels) {
  if (inputs.empty()) throw std::domain_error("plain_accuracy: empty batch");
  std::size_t ok = 0;
  nn::Workspace ws;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (nn::argmax(nn::forward(classifier, inputs[i], ws)) == labels[i]) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(inputs.size());
}

double purified_accuracy(const nn::Mlp& classifier, const attacks::Purifier& purifier,
                         const std::vector<Vec>& inputs, const std::vector<int>& labels,
                         RngStream rng, int threads) {
  if (inputs.empty()) throw std::domain_error("purified_accuracy: empty batch");
  std::vector<unsigned char> ok(inputs.size(), 0);
  parallel_for(inputs.size(), threads, [&](std::size_t i) {
    RngStream s = rng.derive("acc", i);
    const Vec purified = purifier(inputs[i], s);
    ok[i] = nn::argmax(nn::forward(classifier, purified)) == labels[i];
  });
  std::size_t hits = 0;
  for (unsigned char h : ok) hits += h;
  return static_cast<double>(hits) / static_cast<double>(inputs.size());
}

std::vector<Vec> pgd_batch(const nn::Mlp& target, const std::vector<Vec>& inputs,
                           const std::vector<int>& labels, const attacks::PgdConfig& cfg,
                           RngStream rng, int threads) {
  std::vector<Vec> out(inputs.size());
  parallel_for(inputs.size(), threads, [&](std::size_t i) {
    RngStream s = rng.derive("pgd", i);
    out[i] = attacks::pgd_attack(target, inputs[i], labels[i], cfg, s);
  });
  return out;
}

std::vector<Vec> apply_trigger_batch(const std::vector<Vec>& inputs,
                                     const attacks::Trigger& trig) {
  std::vector<Vec> out(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i)
    out[i] = attacks::apply_trigger(inputs[i], trig);
  return out;
}

}  // namespace difflab::harness
