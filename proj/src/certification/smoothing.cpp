#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "difflab/certification.hpp"
#include "difflab/parallel.hpp"

namespace difflab::certification {

void SmoothingConfig::validate() const {
  if (!(sigma > 0.0)) throw std::invalid_argument("smoothing: sigma must be > 0");
  if (n_samples < 1) throw std::invalid_argument("smoothing: n_samples must be >= 1");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw std::invalid_argument("smoothing: confidence must be in (0,1)");
  if (reverse_steps < 1)
    throw std::invalid_argument("smoothing: reverse_steps must be >= 1");
}

int sigma_to_timestep(const diffusion::VarianceSchedule& sched, double sigma) {
  if (!(sigma > 0.0)) throw std::domain_error("sigma_to_timestep: sigma must be > 0");
  // Relative slack so an exactly-representable boundary like
  // (1-0.8)/0.8 = 0.25 is not lost to rounding.
  const double target = sigma * sigma * (1.0 - 1e-12);
  for (int t = 1; t <= sched.T; ++t) {
    const double ratio = (1.0 - sched.ab(t)) / sched.ab(t);
    if (ratio >= target) return t;
  }
  throw std::domain_error("sigma_to_timestep: sigma beyond the schedule's reach");
}

namespace {

// One noisy evaluation: latent sqrt(ab_t)(x + delta), denoised then classified.
int sample_prediction(const nn::Mlp& classifier, const diffusion::DiffusionModel& model,
                      std::span<const double> x, int t_bar, double sigma,
                      int reverse_steps, RngStream& rng) {
  const double sqrt_ab = std::sqrt(model.schedule.ab(t_bar));
  Vec x_t(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    x_t[i] = sqrt_ab * (x[i] + sigma * rng.next_gaussian());
  const Vec denoised = reverse_steps <= 1
                           ? diffusion::one_step_denoise(model, x_t, t_bar)
                           : diffusion::ddim_denoise(model, x_t, t_bar, reverse_steps);
  return nn::argmax(nn::forward(classifier, denoised));
}

std::vector<int> vote_histogram(const nn::Mlp& classifier,
                                const diffusion::DiffusionModel& model,
                                std::span<const double> x, int t_bar,
                                const SmoothingConfig& cfg, const RngStream& base,
                                const char* label, int count) {
  std::vector<int> preds(count);
  parallel_for(static_cast<std::size_t>(count), cfg.threads, [&](std::size_t i) {
    RngStream s = base.derive(label, i);
    preds[i] = sample_prediction(classifier, model, x, t_bar, cfg.sigma,
                                 cfg.reverse_steps, s);
  });
  std::vector<int> hist(classifier.output_dim(), 0);
  for (int p : preds) ++hist[p];
  return hist;
}

}  // namespace

std::vector<int> smoothed_predict(const nn::Mlp& classifier,
                                  const diffusion::DiffusionModel& model,
                                  std::span<const double> x,
                                  const SmoothingConfig& cfg, RngStream rng) {
  cfg.validate();
  const int t_bar = sigma_to_timestep(model.schedule, cfg.sigma);
  return vote_histogram(classifier, model, x, t_bar, cfg, rng, "smooth", cfg.n_samples);
}

double certified_radius(double pa_lower, double sigma) {
  if (!(sigma > 0.0)) throw std::domain_error("certified_radius: sigma must be > 0");
  if (!(pa_lower > 0.0 && pa_lower < 1.0))
    throw std::domain_error("certified_radius: pa must be strictly inside (0,1)");
  if (pa_lower == 0.5) return 0.0;
  const double pb_upper = 1.0 - pa_lower;
  const double r = 0.5 * sigma *
                   (stats::std_normal_quantile(pa_lower) -
                    stats::std_normal_quantile(pb_upper));
  return r > 0.0 ? r : 0.0;
}

CertificationOutcome certify(const nn::Mlp& classifier,
                             const diffusion::DiffusionModel& model,
                             std::span<const double> x, const SmoothingConfig& cfg,
                             RngStream rng) {
  cfg.validate();
  const int t_bar = sigma_to_timestep(model.schedule, cfg.sigma);

  const std::vector<int> sel = vote_histogram(classifier, model, x, t_bar, cfg, rng,
                                              "select", cfg.effective_selection());
  const int candidate =
      static_cast<int>(std::max_element(sel.begin(), sel.end()) - sel.begin());

  const std::vector<int> est =
      vote_histogram(classifier, model, x, t_bar, cfg, rng, "estimate", cfg.n_samples);
  const int hits = est[candidate];
  const double pa_hat = static_cast<double>(hits) / cfg.n_samples;
  const double pa_lower =
      stats::binomial_lower_bound(static_cast<std::uint64_t>(hits),
                                  static_cast<std::uint64_t>(cfg.n_samples),
                                  cfg.confidence);

  CertificationOutcome out;
  out.pa_bound = stats::make_probability_bound(pa_hat, pa_lower, 1.0, cfg.confidence);
  if (cfg.abstain_allowed && pa_lower <= 0.5) {
    out.abstained = true;
    out.predicted_class = CertificationOutcome::kAbstain;
    out.radius = 0.0;
    return out;
  }
  out.predicted_class = candidate;
  // The Clopper-Pearson bound stays strictly inside (0,1) for hits >= 1.
  out.radius = pa_lower <= 0.0 ? 0.0 : certified_radius(pa_lower, cfg.sigma);
  return out;
}

double certified_accuracy(const nn::Mlp& classifier,
                          const diffusion::DiffusionModel& model,
                          const std::vector<Vec>& inputs,
                          const std::vector<int>& labels,
                          const SmoothingConfig& cfg, double radius_eps,
                          RngStream rng) {
  if (inputs.empty()) throw std::domain_error("certified_accuracy: empty batch");
  if (radius_eps < 0.0)
    throw std::domain_error("certified_accuracy: radius_eps must be >= 0");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const CertificationOutcome out =
        certify(classifier, model, inputs[i], cfg, rng.derive("example", i));
    if (!out.abstained && out.predicted_class == labels[i] && out.radius >= radius_eps)
      ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(inputs.size());
}

double certified_accuracy(const nn::Mlp& classifier,
                          const diffusion::DiffusionModel& model,
                          const Dataset& data, const SmoothingConfig& cfg,
                          double radius_eps, RngStream rng) {
  return certified_accuracy(classifier, model, data.x, data.y, cfg, radius_eps, rng);
}

std::vector<ReportRow> certification_report(const nn::Mlp& classifier,
                                            const diffusion::DiffusionModel& model,
                                            const std::vector<Vec>& inputs,
                                            const std::vector<int>& labels,
                                            const SmoothingConfig& cfg,
                                            RngStream rng) {
  std::vector<ReportRow> rows(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const CertificationOutcome out =
        certify(classifier, model, inputs[i], cfg, rng.derive("example", i));
    rows[i] = ReportRow{static_cast<int>(i), labels[i], out.predicted_class,
                        out.pa_bound.lower, out.radius};
  }
  return rows;
}

void write_certification_csv(std::ostream& os, std::span<const ReportRow> rows) {
  os << "input_id,true_label,predicted,pa_lower,radius\n";
  char buf[64];
  for (const ReportRow& r : rows) {
    os << r.input_id << ',' << r.true_label << ',';
    if (r.predicted == CertificationOutcome::kAbstain) {
      os << "ABSTAIN";
    } else {
      os << r.predicted;
    }
    std::snprintf(buf, sizeof(buf), ",%.17g,%.17g\n", r.pa_lower, r.radius);
    os << buf;
  }
}

}  // namespace difflab::certification
