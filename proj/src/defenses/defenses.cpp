#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "difflab/defenses.hpp"
#include "difflab/parallel.hpp"
#include "difflab/stats.hpp"

namespace difflab::defenses {

Vec reproject(std::span<const double> x_input, std::span<const double> x_purified,
              double eps_ball) {
  if (x_input.size() != x_purified.size())
    throw std::invalid_argument("reproject: dimension mismatch");
  if (eps_ball < 0.0) throw std::invalid_argument("reproject: eps must be >= 0");
  Vec out(x_purified.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::clamp(x_purified[i], x_input[i] - eps_ball, x_input[i] + eps_ball);
  return out;
}

EntropyReport entropy_detect(const diffusion::DiffusionModel& model,
                             const nn::Mlp& classifier, const Dataset& reference,
                             int t_large, int trials, int per_trial, RngStream rng,
                             diffusion::Sampler sampler, int threads) {
  if (reference.empty()) throw std::domain_error("entropy_detect: empty reference set");
  model.schedule.require_timestep(t_large, 1);
  if (trials < 1 || per_trial < 1)
    throw std::invalid_argument("entropy_detect: trials and per_trial must be >= 1");

  const int classes = classifier.output_dim();
  EntropyReport report;
  report.per_trial = per_trial;
  report.timestep = t_large;

  for (int trial = 0; trial < trials; ++trial) {
    RngStream trial_rng = rng.derive("entropy.trial", trial);

    // Sample reference inputs, without replacement when possible.
    std::vector<std::size_t> chosen;
    if (static_cast<std::size_t>(per_trial) <= reference.size()) {
      std::vector<std::size_t> order(reference.size());
      std::iota(order.begin(), order.end(), 0);
      RngStream pick = trial_rng.derive("pick");
      shuffle(order, pick);
      chosen.assign(order.begin(), order.begin() + per_trial);
    } else {
      RngStream pick = trial_rng.derive("pick");
      chosen.resize(per_trial);
      for (auto& c : chosen) c = pick.next_below(reference.size());
    }

    std::vector<int> preds(chosen.size());
    parallel_for(chosen.size(), threads, [&](std::size_t i) {
      RngStream s = trial_rng.derive("purify", i);
      const Vec out = diffusion::purify(model, reference.x[chosen[i]], t_large, s, sampler);
      preds[i] = nn::argmax(nn::forward(classifier, out));
    });

    Vec dist(classes, 0.0);
    for (int p : preds) dist[p] += 1.0 / static_cast<double>(preds.size());
    report.trial_entropies.push_back(stats::entropy(dist));
  }

  report.mean = std::accumulate(report.trial_entropies.begin(),
                                report.trial_entropies.end(), 0.0) /
                static_cast<double>(trials);
  return report;
}

std::string entropy_report_to_json(const EntropyReport& report) {
  nlohmann::json j;
  j["trial_entropies"] = report.trial_entropies;
  j["mean"] = report.mean;
  j["per_trial"] = report.per_trial;
  j["timestep"] = report.timestep;
  return j.dump(2);
}

EntropyReport entropy_report_from_json(const std::string& json_text) {
  const nlohmann::json j = nlohmann::json::parse(json_text);
  EntropyReport r;
  r.trial_entropies = j.at("trial_entropies").get<std::vector<double>>();
  r.mean = j.at("mean").get<double>();
  r.per_trial = j.at("per_trial").get<int>();
  r.timestep = j.at("timestep").get<int>();
  return r;
}

std::vector<double> kl_monotonicity_check(std::span<const double> mean_shift,
                                          const diffusion::VarianceSchedule& sched,
                                          std::span<const int> timesteps) {
  if (timesteps.empty())
    throw std::invalid_argument("kl_monotonicity_check: empty timestep list");
  double shift_sq = 0.0;
  for (double s : mean_shift) shift_sq += s * s;
  std::vector<double> kl;
  kl.reserve(timesteps.size());
  for (int t : timesteps) {
    sched.require_timestep(t, 0);
    kl.push_back(0.5 * sched.ab(t) * shift_sq);
  }
  return kl;
}

std::vector<double> kl_monotonicity_check_mc(std::span<const double> mean_shift,
                                             const diffusion::VarianceSchedule& sched,
                                             std::span<const int> timesteps,
                                             int n_samples, RngStream rng) {
  if (timesteps.empty())
    throw std::invalid_argument("kl_monotonicity_check_mc: empty timestep list");
  if (n_samples < 2)
    throw std::invalid_argument("kl_monotonicity_check_mc: need n_samples >= 2");
  const std::size_t dim = mean_shift.size();

  std::vector<double> kl;
  kl.reserve(timesteps.size());
  for (std::size_t ti = 0; ti < timesteps.size(); ++ti) {
    const int t = timesteps[ti];
    sched.require_timestep(t, 0);
    const double sqrt_ab = std::sqrt(sched.ab(t));
    const double sqrt_rem = std::sqrt(1.0 - sched.ab(t));

    RngStream sp = rng.derive("kl.p", ti);
    RngStream sq = rng.derive("kl.q", ti);

    // Per-coordinate running moments for both populations.
    Vec mean_p(dim, 0.0), m2_p(dim, 0.0), mean_q(dim, 0.0), m2_q(dim, 0.0);
    for (int k = 1; k <= n_samples; ++k) {
      for (std::size_t i = 0; i < dim; ++i) {
        const double xp = sqrt_ab * sp.next_gaussian() + sqrt_rem * sp.next_gaussian();
        const double dp = xp - mean_p[i];
        mean_p[i] += dp / k;
        m2_p[i] += dp * (xp - mean_p[i]);

        const double xq = sqrt_ab * (mean_shift[i] + sq.next_gaussian()) +
                          sqrt_rem * sq.next_gaussian();
        const double dq = xq - mean_q[i];
        mean_q[i] += dq / k;
        m2_q[i] += dq * (xq - mean_q[i]);
      }
    }

    // KL between the fitted diagonal Gaussians, p against q.
    double total = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double var_p = m2_p[i] / (n_samples - 1);
      const double var_q = m2_q[i] / (n_samples - 1);
      const double dm = mean_p[i] - mean_q[i];
      total += 0.5 * (std::log(var_q / var_p) + (var_p + dm * dm) / var_q - 1.0);
    }
    kl.push_back(total);
  }
  return kl;
}

}  // namespace difflab::defenses
