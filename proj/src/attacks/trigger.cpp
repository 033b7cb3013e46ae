#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "difflab/attacks.hpp"
#include "difflab/binio.hpp"
#include "difflab/kernels.hpp"

namespace difflab::attacks {

namespace {
constexpr char kMagic[8] = {'D', 'I', 'F', 'L', 'T', 'R', 'G', '1'};
}

void Trigger::validate() const {
  if (pattern.empty()) throw std::invalid_argument("trigger: empty pattern");
  if (!(mixing_weight >= 0.0 && mixing_weight <= 1.0))
    throw std::invalid_argument("trigger: mixing weight must be in [0,1]");
  if (mask_len >= 0) {
    if (mask_start < 0 || mask_len > dim() || mask_start + mask_len > dim())
      throw std::invalid_argument("trigger: mask outside pattern");
  }
  for (int i = 0; i < dim(); ++i) {
    if (!std::isfinite(pattern[i]))
      throw std::invalid_argument("trigger: pattern must be finite");
    if (!in_mask(i) && pattern[i] != 0.0)
      throw std::invalid_argument("trigger: masked-out coordinates must be zero");
  }
}

Vec apply_trigger(std::span<const double> x, const Trigger& trig) {
  trig.validate();
  if (x.size() != static_cast<std::size_t>(trig.dim()))
    throw std::invalid_argument("apply_trigger: dimension mismatch");
  Vec out(x.size());
  kernels::active().lincomb(1.0 - trig.mixing_weight, x.data(), trig.mixing_weight,
                            trig.pattern.data(), out.data(), out.size());
  return out;
}

AttackMode attack_mode_from_string(const std::string& name, int target_class) {
  if (name == "untargeted") return AttackMode{AttackKind::kUntargeted, target_class};
  if (name == "targeted") return AttackMode{AttackKind::kTargeted, target_class};
  throw std::invalid_argument("unknown attack mode: " + name);
}

Trigger optimize_trigger(const std::vector<nn::Mlp>& surrogates, const Dataset& data,
                         AttackMode mode, Trigger init, const TriggerOptConfig& cfg,
                         RngStream rng) {
  if (surrogates.empty())
    throw std::domain_error("optimize_trigger: need at least one surrogate");
  init.validate();
  if (data.empty()) throw std::domain_error("optimize_trigger: empty dataset");
  if (data.dim != init.dim())
    throw std::invalid_argument("optimize_trigger: trigger/data dimension mismatch");
  if (cfg.steps < 0 || cfg.batch_size < 1)
    throw std::invalid_argument("optimize_trigger: bad steps/batch");
  if (cfg.steps == 0) return init;

  const Bounds box = data.bounding_box();
  const int dim = init.dim();
  const double alpha = init.mixing_weight;
  const double obj_sign = mode.targeted() ? 1.0 : -1.0;  // descend vs ascend

  RngStream batch_stream = rng.derive("trigger.batch");

  Trigger trig = init;
  Vec grad(dim), m(dim, 0.0), v(dim, 0.0);
  nn::Workspace ws;
  nn::Gradients scratch;
  std::vector<nn::Gradients> grads_per_model;
  for (const auto& f : surrogates) grads_per_model.push_back(nn::Gradients::like(f));

  const auto& k = kernels::active();
  for (int step = 1; step <= cfg.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (int b = 0; b < cfg.batch_size; ++b) {
      const std::size_t idx = batch_stream.next_below(data.size());
      const Vec x_r = apply_trigger(data.x[idx], trig);
      for (std::size_t s = 0; s < surrogates.size(); ++s) {
        const nn::Mlp& f = surrogates[s];
        const Vec& logits = nn::forward(f, x_r, ws);
        const int loss_label = mode.targeted() ? mode.target_class : data.y[idx];
        auto [loss, dlogits] = nn::cross_entropy_with_grad(logits, loss_label);
        nn::accumulate_backward(f, ws, dlogits, grads_per_model[s]);
        // d loss / d r = alpha * d loss / d x_r
        k.axpy(obj_sign * alpha / cfg.batch_size, grads_per_model[s].dinput.data(),
               grad.data(), grad.size());
      }
    }
    const double inv_bc1 = 1.0 / (1.0 - std::pow(0.9, step));
    const double inv_bc2 = 1.0 / (1.0 - std::pow(0.999, step));
    k.adam_update(trig.pattern.data(), m.data(), v.data(), grad.data(), grad.size(),
                  cfg.lr, 0.9, 0.999, 1e-8, inv_bc1, inv_bc2);
    for (int i = 0; i < dim; ++i) {
      trig.pattern[i] = std::clamp(trig.pattern[i], box.lo[i], box.hi[i]);
      if (!trig.in_mask(i)) trig.pattern[i] = 0.0;
    }
  }
  trig.validate();
  return trig;
}

void save_trigger(std::ostream& os, const Trigger& trig) {
  trig.validate();
  binio::write_magic(os, kMagic);
  binio::write_u32(os, 1);
  binio::write_i32(os, trig.dim());
  binio::write_i32(os, trig.mask_start);
  binio::write_i32(os, trig.mask_len);
  binio::write_f64(os, trig.mixing_weight);
  binio::write_f64_array(os, trig.pattern);
}

Trigger load_trigger(std::istream& is) {
  binio::expect_magic(is, kMagic, "trigger");
  if (binio::read_u32(is) != 1) throw std::runtime_error("trigger: unsupported version");
  Trigger trig;
  const int dim = binio::read_i32(is);
  trig.mask_start = binio::read_i32(is);
  trig.mask_len = binio::read_i32(is);
  trig.mixing_weight = binio::read_f64(is);
  trig.pattern = binio::read_f64_array(is);
  if (trig.dim() != dim) throw std::runtime_error("trigger: pattern size mismatch");
  trig.validate();
  return trig;
}

void save_trigger(const std::string& path, const Trigger& trig) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  save_trigger(os, trig);
  if (!os) throw std::runtime_error("write failed: " + path);
}

Trigger load_trigger(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return load_trigger(is);
}

}  // namespace difflab::attacks
