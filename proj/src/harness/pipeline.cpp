#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "difflab/attacks.hpp"
#include "difflab/binio.hpp"
#include "difflab/certification.hpp"
#include "difflab/dataset.hpp"
#include "difflab/defenses.hpp"
#include "difflab/diffusion.hpp"
#include "difflab/metrics.hpp"
#include "difflab/pipeline.hpp"

namespace difflab::harness {

namespace fs = std::filesystem;

StageDependencyError::StageDependencyError(std::string stage_name,
                                           std::string artifact_path)
    : std::runtime_error("stage '" + stage_name +
                         "' requires missing artifact: " + artifact_path),
      stage(std::move(stage_name)),
      artifact(std::move(artifact_path)) {}

namespace {

struct StageDef {
  const char* name;
  const char* ext;
  std::vector<std::string> prefixes;
  std::vector<std::string> deps;
};

const std::vector<StageDef>& stage_table() {
  static const std::vector<StageDef> kStages = {
      {"diffusion", "dm", {"dataset.", "diffusion."}, {}},
      {"classifiers", "bin", {"dataset.", "classifier.", "surrogate.", "pgd."}, {}},
      {"trigger", "trg", {"dataset.", "trigger."}, {"classifiers"}},
      {"backdoor", "dm", {"backdoor.", "pgd."}, {"diffusion", "trigger"}},
      {"poison", "dm", {"poison."}, {"diffusion", "trigger"}},
      {"purify-eval", "json", {"purify.", "pgd.", "eval.", "poison."},
       {"backdoor", "classifiers", "trigger", "poison"}},
      {"certify", "json", {"certify."}, {"backdoor", "classifiers", "trigger"}},
      {"defend", "json", {"defend.", "pgd.", "purify."},
       {"backdoor", "classifiers", "trigger"}},
      {"diagnose", "json", {"diagnose."}, {"backdoor", "classifiers"}},
  };
  return kStages;
}

const StageDef& stage_def(const std::string& stage) {
  for (const StageDef& s : stage_table())
    if (stage == s.name) return s;
  throw ConfigError("unknown stage: " + stage);
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

constexpr char kBundleMagic[8] = {'D', 'I', 'F', 'L', 'C', 'L', 'S', '1'};

// Target classifier plus the surrogate pool used for trigger optimization.
struct ClassifierBundle {
  nn::Mlp target;
  std::vector<nn::Mlp> surrogates;
};

void save_bundle(const std::string& path, const ClassifierBundle& b) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  binio::write_magic(os, kBundleMagic);
  binio::write_u32(os, 1);
  binio::write_u32(os, static_cast<std::uint32_t>(b.surrogates.size()));
  nn::save_mlp(os, b.target);
  for (const auto& s : b.surrogates) nn::save_mlp(os, s);
}

ClassifierBundle load_bundle(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  binio::expect_magic(is, kBundleMagic, "classifier bundle");
  if (binio::read_u32(is) != 1)
    throw std::runtime_error("classifier bundle: unsupported version");
  const std::uint32_t n = binio::read_u32(is);
  ClassifierBundle b;
  b.target = nn::load_mlp(is);
  for (std::uint32_t i = 0; i < n; ++i) b.surrogates.push_back(nn::load_mlp(is));
  return b;
}

std::vector<int> parse_hidden(const Config& cfg, const std::string& key) {
  std::vector<int> hidden = cfg.get_int_list(key);
  if (hidden.empty()) throw ConfigError(key + ": need at least one hidden size");
  return hidden;
}

nn::Activation parse_activation(const std::string& name) {
  if (name == "tanh") return nn::Activation::kTanh;
  if (name == "relu") return nn::Activation::kRelu;
  throw ConfigError("unknown activation: " + name);
}

DatasetSpec dataset_spec(const Config& cfg) {
  DatasetSpec spec;
  spec.kind = dataset_kind_from_string(cfg.get_string("dataset.kind"));
  spec.dims = cfg.get_int("dataset.dims");
  spec.classes = cfg.get_int("dataset.classes");
  spec.train_size = cfg.get_int("dataset.train_size");
  spec.test_size = cfg.get_int("dataset.test_size");
  spec.seed = cfg.get_u64("seed");
  spec.core_dims = cfg.get_int("dataset.core_dims");
  spec.center_scale = cfg.get_double("dataset.center_scale");
  spec.core_sigma = cfg.get_double("dataset.core_sigma");
  spec.texture_delta = cfg.get_double("dataset.texture_delta");
  spec.texture_sigma = cfg.get_double("dataset.texture_sigma");
  spec.image_side = cfg.get_int("dataset.image_side");
  spec.pixel_sigma = cfg.get_double("dataset.pixel_sigma");
  spec.clamp01 = cfg.get_bool("dataset.clamp");
  return spec;
}

attacks::PgdConfig pgd_config(const Config& cfg) {
  attacks::PgdConfig p;
  p.epsilon = cfg.get_double("pgd.epsilon");
  p.step_size = cfg.get_double("pgd.step");
  p.iterations = cfg.get_int("pgd.iters");
  p.mode = attacks::attack_mode_from_string(cfg.get_string("pgd.mode"),
                                            cfg.get_int("pgd.target_class"));
  return p;
}

std::optional<diffusion::ClampBox> clamp_box(const Config& cfg) {
  if (cfg.get_string("dataset.kind") == "image_like" && cfg.get_bool("dataset.clamp"))
    return diffusion::ClampBox{0.0, 1.0};
  return std::nullopt;
}

// Shared context: loads or builds stage artifacts on demand.  Stages listed
// in `buildable` may be built; everything else must already exist on disk.
struct Lab {
  const Config& cfg;
  std::string out_dir;
  std::vector<std::string> buildable;
  RngStream master;

  std::optional<SplitDataset> data_;
  std::map<std::string, diffusion::DiffusionModel> models_;
  std::optional<ClassifierBundle> bundle_;
  std::optional<attacks::Trigger> trigger_;

  Lab(const Config& c, std::string out, std::vector<std::string> build)
      : cfg(c), out_dir(std::move(out)), buildable(std::move(build)),
        master(c.get_u64("seed"), RngStream::tag("difflab")) {}

  bool can_build(const std::string& stage) const {
    return std::find(buildable.begin(), buildable.end(), stage) != buildable.end();
  }

  int threads() const { return cfg.get_int("threads"); }

  const SplitDataset& data() {
    if (!data_) data_ = make_dataset(dataset_spec(cfg));
    return *data_;
  }

  std::string require_or_build(const std::string& stage);

  const diffusion::DiffusionModel& benign_model() {
    return model_artifact("diffusion");
  }
  const diffusion::DiffusionModel& backdoored_model() {
    return model_artifact("backdoor");
  }
  const diffusion::DiffusionModel& poisoned_model() {
    return model_artifact("poison");
  }

  const diffusion::DiffusionModel& model_artifact(const std::string& stage) {
    auto it = models_.find(stage);
    if (it == models_.end()) {
      const std::string path = require_or_build(stage);
      it = models_.emplace(stage, diffusion::load_model(path)).first;
    }
    return it->second;
  }

  const ClassifierBundle& classifiers() {
    if (!bundle_) bundle_ = load_bundle(require_or_build("classifiers"));
    return *bundle_;
  }

  const attacks::Trigger& trigger() {
    if (!trigger_) trigger_ = attacks::load_trigger(require_or_build("trigger"));
    return *trigger_;
  }

  attacks::Purifier purifier_for(const diffusion::DiffusionModel& model) {
    return attacks::model_purifier(
        model, cfg.get_int("purify.t_bar"),
        diffusion::sampler_from_string(cfg.get_string("purify.sampler")),
        clamp_box(cfg));
  }
};

// ---------------------------------------------------------------------------
// Build stages

std::string build_diffusion(Lab& lab, const std::string& path) {
  const Config& cfg = lab.cfg;
  diffusion::DiffusionModel model;
  model.schedule = diffusion::build_schedule(cfg.get_int("diffusion.T"),
                                             cfg.get_double("diffusion.beta_start"),
                                             cfg.get_double("diffusion.beta_end"));
  model.time_embed_dim = cfg.get_int("diffusion.time_embed");

  const Dataset& train = lab.data().train;
  std::vector<int> dims;
  dims.push_back(train.dim + model.time_embed_dim);
  for (int h : parse_hidden(cfg, "diffusion.hidden")) dims.push_back(h);
  dims.push_back(train.dim);
  RngStream init = lab.master.derive("denoiser.init");
  model.denoiser =
      nn::make_mlp(dims, parse_activation(cfg.get_string("diffusion.activation")), init);

  diffusion::TrainConfig tc{cfg.get_int("diffusion.epochs"),
                            cfg.get_int("diffusion.batch"),
                            cfg.get_double("diffusion.lr")};
  diffusion::train_denoiser(model, train, tc, lab.master.derive("denoiser.train"));
  diffusion::save_model(path, model);
  return path;
}

std::string build_classifiers(Lab& lab, const std::string& path) {
  const Config& cfg = lab.cfg;
  const Dataset& train = lab.data().train;

  ClassifierConfig target_cfg;
  target_cfg.hidden = parse_hidden(cfg, "classifier.hidden");
  target_cfg.activation = parse_activation(cfg.get_string("classifier.activation"));
  target_cfg.epochs = cfg.get_int("classifier.epochs");
  target_cfg.batch_size = cfg.get_int("classifier.batch");
  target_cfg.lr = cfg.get_double("classifier.lr");

  ClassifierBundle bundle;
  bundle.target = train_classifier(train, target_cfg, lab.master.derive("classifier.target"));

  // Surrogates differ from the target in width/depth and seed, standing in
  // for the architecture gap between surrogate and victim.
  const std::vector<std::vector<int>> variants = {{96, 96}, {64, 64}, {128}, {96, 48}};
  const int count = cfg.get_int("surrogate.count");
  if (count < 1) throw ConfigError("surrogate.count must be >= 1");
  for (int i = 0; i < count; ++i) {
    ClassifierConfig scfg = target_cfg;
    scfg.hidden = variants[i % variants.size()];
    scfg.activation = (i % 2 == 0) ? nn::Activation::kTanh : nn::Activation::kRelu;
    bundle.surrogates.push_back(
        train_classifier(train, scfg, lab.master.derive("classifier.surrogate", i)));
  }
  save_bundle(path, bundle);
  return path;
}

std::string build_trigger(Lab& lab, const std::string& path) {
  const Config& cfg = lab.cfg;
  const Dataset& train = lab.data().train;

  attacks::Trigger init;
  init.pattern.assign(train.dim, 0.0);
  init.mask_start = cfg.get_int("trigger.mask_start");
  init.mask_len = cfg.get_int("trigger.mask_len");
  init.mixing_weight = cfg.get_double("trigger.alpha");

  RngStream rng = lab.master.derive("trigger");
  RngStream init_rng = rng.derive("init");
  const Bounds box = train.bounding_box();
  for (int i = 0; i < train.dim; ++i) {
    if (init.in_mask(i))
      init.pattern[i] = 0.1 * init_rng.uniform(box.lo[i], box.hi[i]);
  }

  const attacks::AttackMode mode = attacks::attack_mode_from_string(
      cfg.get_string("trigger.mode"), cfg.get_int("trigger.target_class"));
  attacks::TriggerOptConfig opt{cfg.get_int("trigger.steps"),
                                cfg.get_double("trigger.lr"),
                                cfg.get_int("trigger.batch")};
  const attacks::Trigger trig = attacks::optimize_trigger(
      lab.classifiers().surrogates, train, mode, init, opt, rng.derive("opt"));
  attacks::save_trigger(path, trig);
  return path;
}

std::string build_backdoor(Lab& lab, const std::string& path) {
  const Config& cfg = lab.cfg;
  attacks::BackdoorConfig bc;
  bc.lambda = cfg.get_double("backdoor.lambda");
  bc.truncation = cfg.get_int("backdoor.truncation");
  bc.entangle_noise = cfg.get_bool("backdoor.entangle");
  bc.epochs = cfg.get_int("backdoor.epochs");
  bc.batch_size = cfg.get_int("backdoor.batch");
  bc.lr = cfg.get_double("backdoor.lr");

  const std::string variant = cfg.get_string("backdoor.variant");
  diffusion::DiffusionModel model;
  if (variant == "symmetric") {
    model = attacks::backdoor_train(lab.benign_model(), lab.data().train, lab.trigger(),
                                    bc, lab.master.derive("backdoor"));
  } else if (variant == "nonadversarial") {
    model = attacks::backdoor_train_nonadversarial(
        lab.benign_model(), lab.data().train, lab.trigger(),
        lab.classifiers().surrogates.front(), bc, pgd_config(cfg),
        lab.master.derive("backdoor"));
  } else {
    throw ConfigError("backdoor.variant must be symmetric or nonadversarial");
  }
  diffusion::save_model(path, model);
  return path;
}

std::string build_poison(Lab& lab, const std::string& path) {
  const Config& cfg = lab.cfg;
  const Dataset poisoned =
      attacks::poison_dataset(lab.data().train, lab.trigger(),
                              cfg.get_double("poison.rate"),
                              lab.master.derive("poison.pick"));
  diffusion::DiffusionModel model = lab.benign_model();
  diffusion::TrainConfig tc{cfg.get_int("poison.epochs"), cfg.get_int("poison.batch"),
                            cfg.get_double("poison.lr")};
  // Victim-side fine-tuning: plain mean-alignment loss on the polluted set.
  diffusion::train_denoiser(model, poisoned, tc, lab.master.derive("poison.train"));
  diffusion::save_model(path, model);
  return path;
}

// ---------------------------------------------------------------------------
// Evaluation stages

ExperimentReport base_report(Lab& lab) {
  ExperimentReport r;
  r.seed = lab.cfg.get_u64("seed");
  r.config_echo = lab.cfg.effective_entries();
  return r;
}

void eval_through_purifier(Lab& lab, const std::string& tag,
                           const diffusion::DiffusionModel& model,
                           const std::vector<Vec>& clean,
                           const std::vector<Vec>& adversarial,
                           const std::vector<Vec>& triggered,
                           const std::vector<int>& labels, ExperimentReport& r) {
  const nn::Mlp& f = lab.classifiers().target;
  const attacks::Purifier purifier = lab.purifier_for(model);
  const int threads = lab.threads();
  const int target_class = lab.cfg.get_int("trigger.target_class");
  RngStream rng = lab.master.derive("eval." + tag);

  r.metrics["clean_acc_" + tag] =
      purified_accuracy(f, purifier, clean, labels, rng.derive("clean"), threads);
  r.metrics["robust_acc_" + tag] =
      purified_accuracy(f, purifier, adversarial, labels, rng.derive("robust"), threads);
  r.metrics["asr_untargeted_" + tag] = attacks::measure_asr(
      f, purifier, triggered, labels, {attacks::AttackKind::kUntargeted, 0},
      rng.derive("asr_u"), threads);
  r.metrics["asr_targeted_" + tag] = attacks::measure_asr(
      f, purifier, triggered, labels, {attacks::AttackKind::kTargeted, target_class},
      rng.derive("asr_t"), threads);
}

ExperimentReport eval_purify(Lab& lab) {
  const Config& cfg = lab.cfg;
  const Dataset& test = lab.data().test;
  const std::size_t n = std::min<std::size_t>(test.size(), cfg.get_int("eval.examples"));
  const std::vector<Vec> inputs(test.x.begin(), test.x.begin() + n);
  const std::vector<int> labels(test.y.begin(), test.y.begin() + n);

  const nn::Mlp& f = lab.classifiers().target;
  const std::vector<Vec> triggered = apply_trigger_batch(inputs, lab.trigger());
  const std::vector<Vec> adversarial =
      pgd_batch(f, inputs, labels, pgd_config(cfg),
                lab.master.derive("eval.pgd"), lab.threads());

  ExperimentReport r = base_report(lab);
  r.metrics["clean_acc_no_purify"] = plain_accuracy(f, inputs, labels);
  r.metrics["robust_acc_no_purify"] = plain_accuracy(f, adversarial, labels);
  r.metrics["asr_untargeted_no_purify"] =
      attacks::measure_asr(f, attacks::identity_purifier(), triggered, labels,
                           {attacks::AttackKind::kUntargeted, 0},
                           lab.master.derive("eval.asr_plain"), lab.threads());

  eval_through_purifier(lab, "benign", lab.benign_model(), inputs, adversarial,
                        triggered, labels, r);
  eval_through_purifier(lab, "backdoored", lab.backdoored_model(), inputs, adversarial,
                        triggered, labels, r);
  if (cfg.get_bool("poison.enabled")) {
    eval_through_purifier(lab, "poisoned", lab.poisoned_model(), inputs, adversarial,
                          triggered, labels, r);
  }
  r.info["eval_examples"] = std::to_string(n);
  return r;
}

certification::SmoothingConfig smoothing_config(const Config& cfg, int threads) {
  certification::SmoothingConfig sc;
  sc.sigma = cfg.get_double("certify.sigma");
  sc.n_samples = cfg.get_int("certify.samples");
  sc.selection_samples = cfg.get_int("certify.selection");
  sc.confidence = cfg.get_double("certify.confidence");
  sc.abstain_allowed = cfg.get_bool("certify.abstain");
  sc.reverse_steps = cfg.get_int("certify.reverse_steps");
  sc.threads = threads;
  return sc;
}

ExperimentReport eval_certify(Lab& lab, const std::string& artifact_base) {
  const Config& cfg = lab.cfg;
  const Dataset& test = lab.data().test;
  const std::size_t n =
      std::min<std::size_t>(test.size(), cfg.get_int("certify.examples"));
  const std::vector<Vec> inputs(test.x.begin(), test.x.begin() + n);
  const std::vector<int> labels(test.y.begin(), test.y.begin() + n);
  const std::vector<Vec> triggered = apply_trigger_batch(inputs, lab.trigger());

  const certification::SmoothingConfig sc = smoothing_config(cfg, lab.threads());
  const double radius_eps = cfg.get_double("certify.radius");
  const nn::Mlp& f = lab.classifiers().target;

  ExperimentReport r = base_report(lab);
  struct Case {
    const char* name;
    const diffusion::DiffusionModel* model;
    const std::vector<Vec>* inputs;
  };
  const std::vector<Case> cases = {
      {"clean_benign", &lab.benign_model(), &inputs},
      {"trigger_benign", &lab.benign_model(), &triggered},
      {"clean_backdoored", &lab.backdoored_model(), &inputs},
      {"trigger_backdoored", &lab.backdoored_model(), &triggered},
  };
  for (const Case& c : cases) {
    RngStream rng = lab.master.derive(std::string("certify.") + c.name);
    const auto rows =
        certification::certification_report(f, *c.model, *c.inputs, labels, sc, rng);
    std::size_t ok = 0;
    for (const auto& row : rows) {
      if (row.predicted == labels[row.input_id] && row.radius >= radius_eps) ++ok;
    }
    r.metrics[std::string("certified_acc_") + c.name] =
        static_cast<double>(ok) / static_cast<double>(rows.size());
    const std::string csv_path = artifact_base + "-" + c.name + ".csv";
    std::ofstream os(csv_path);
    if (!os) throw std::runtime_error("cannot open for write: " + csv_path);
    certification::write_certification_csv(os, rows);
    r.info[std::string("rows_") + c.name] = csv_path;
  }
  r.info["certify_examples"] = std::to_string(n);
  r.info["certify_timestep"] =
      std::to_string(certification::sigma_to_timestep(
          lab.benign_model().schedule, sc.sigma));
  return r;
}

ExperimentReport eval_defend(Lab& lab) {
  const Config& cfg = lab.cfg;
  const Dataset& test = lab.data().test;
  const std::size_t n = std::min<std::size_t>(test.size(), cfg.get_int("eval.examples"));
  const std::vector<Vec> inputs(test.x.begin(), test.x.begin() + n);
  const std::vector<int> labels(test.y.begin(), test.y.begin() + n);

  const nn::Mlp& f = lab.classifiers().target;
  const std::vector<Vec> triggered = apply_trigger_batch(inputs, lab.trigger());
  const std::vector<Vec> adversarial =
      pgd_batch(f, inputs, labels, pgd_config(cfg),
                lab.master.derive("defend.pgd"), lab.threads());

  ExperimentReport r = base_report(lab);
  const attacks::Purifier base = lab.purifier_for(lab.backdoored_model());
  const int target_class = cfg.get_int("trigger.target_class");

  for (double eps : cfg.get_double_list("defend.reproject_eps")) {
    const attacks::Purifier guarded = [&base, eps](std::span<const double> x,
                                                   RngStream& rng) {
      const Vec purified = base(x, rng);
      return defenses::reproject(x, purified, eps);
    };
    char tag[48];
    std::snprintf(tag, sizeof(tag), "reproject_%g", eps);
    RngStream rng = lab.master.derive(std::string("defend.") + tag);
    r.metrics[std::string(tag) + "_clean_acc"] =
        purified_accuracy(f, guarded, inputs, labels, rng.derive("clean"), lab.threads());
    r.metrics[std::string(tag) + "_robust_acc"] = purified_accuracy(
        f, guarded, adversarial, labels, rng.derive("robust"), lab.threads());
    r.metrics[std::string(tag) + "_asr"] = attacks::measure_asr(
        f, guarded, triggered, labels, {attacks::AttackKind::kUntargeted, target_class},
        rng.derive("asr"), lab.threads());
  }

  if (cfg.get_int("defend.adv_epochs") > 0) {
    ClassifierConfig acfg;
    acfg.hidden = parse_hidden(cfg, "classifier.hidden");
    acfg.activation = parse_activation(cfg.get_string("classifier.activation"));
    acfg.epochs = cfg.get_int("defend.adv_epochs");
    acfg.batch_size = cfg.get_int("classifier.batch");
    acfg.lr = cfg.get_double("classifier.lr");
    acfg.adversarial = true;
    acfg.adv_pgd = pgd_config(cfg);
    acfg.adv_pgd.iterations = cfg.get_int("defend.adv_pgd_iters");
    const nn::Mlp robust_f =
        train_classifier(lab.data().train, acfg, lab.master.derive("defend.advtrain"));

    RngStream rng = lab.master.derive("defend.advtrain.eval");
    r.metrics["advtrain_clean_acc"] = purified_accuracy(
        robust_f, base, inputs, labels, rng.derive("clean"), lab.threads());
    r.metrics["advtrain_asr_untargeted"] = attacks::measure_asr(
        robust_f, base, triggered, labels, {attacks::AttackKind::kUntargeted, 0},
        rng.derive("asr_u"), lab.threads());
    r.metrics["advtrain_asr_targeted"] = attacks::measure_asr(
        robust_f, base, triggered, labels,
        {attacks::AttackKind::kTargeted, target_class}, rng.derive("asr_t"),
        lab.threads());
  }
  return r;
}

ExperimentReport eval_diagnose(Lab& lab, const std::string& artifact_base) {
  const Config& cfg = lab.cfg;
  const nn::Mlp& f = lab.classifiers().target;
  const Dataset& test = lab.data().test;
  const int t_large = cfg.get_int("diagnose.t_large");
  const int trials = cfg.get_int("diagnose.trials");
  const int per_trial = cfg.get_int("diagnose.per_trial");

  ExperimentReport r = base_report(lab);
  struct Case {
    const char* name;
    const diffusion::DiffusionModel* model;
  };
  for (const Case& c : std::vector<Case>{{"benign", &lab.benign_model()},
                                         {"backdoored", &lab.backdoored_model()}}) {
    const defenses::EntropyReport rep = defenses::entropy_detect(
        *c.model, f, test, t_large, trials, per_trial,
        lab.master.derive(std::string("diagnose.") + c.name),
        diffusion::Sampler::kDdpm, lab.threads());
    r.metrics[std::string("entropy_mean_") + c.name] = rep.mean;
    r.series[std::string("entropy_trials_") + c.name] = rep.trial_entropies;
    const std::string path = artifact_base + "-entropy-" + c.name + ".json";
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os << defenses::entropy_report_to_json(rep) << '\n';
    r.info[std::string("entropy_report_") + c.name] = path;
  }
  r.metrics["entropy_gap"] =
      r.metrics["entropy_mean_benign"] - r.metrics["entropy_mean_backdoored"];

  // Theorem-style KL diagnostic on the idealized shift pair.
  const attacks::Trigger& trig = lab.trigger();
  Vec shift(trig.pattern.size());
  for (std::size_t i = 0; i < shift.size(); ++i)
    shift[i] = trig.mixing_weight * trig.pattern[i];
  const int T = lab.benign_model().schedule.T;
  std::vector<int> ts = {std::max(1, T / 4), std::max(1, T / 2),
                         std::max(1, 3 * T / 4), T};
  const std::vector<double> kl = defenses::kl_monotonicity_check(
      shift, lab.benign_model().schedule, ts);
  r.series["kl_analytic"] = kl;
  r.series["kl_timesteps"] = std::vector<double>(ts.begin(), ts.end());
  bool monotone = true;
  for (std::size_t i = 1; i < kl.size(); ++i)
    if (kl[i] > kl[i - 1]) monotone = false;
  r.metrics["kl_monotone"] = monotone ? 1.0 : 0.0;

  const int kl_samples = cfg.get_int("diagnose.kl_samples");
  if (kl_samples > 0) {
    r.series["kl_mc"] = defenses::kl_monotonicity_check_mc(
        shift, lab.benign_model().schedule, ts, kl_samples,
        lab.master.derive("diagnose.kl_mc"));
  }
  return r;
}

// ---------------------------------------------------------------------------

std::string run_stage_in(Lab& lab, const std::string& stage) {
  const std::string path = artifact_path(lab.cfg, lab.out_dir, stage);
  if (fs::exists(path)) return path;

  fs::create_directories(lab.out_dir);
  const auto started = std::chrono::steady_clock::now();
  ExperimentReport report;
  bool is_eval = false;

  if (stage == "diffusion") {
    build_diffusion(lab, path);
  } else if (stage == "classifiers") {
    build_classifiers(lab, path);
  } else if (stage == "trigger") {
    build_trigger(lab, path);
  } else if (stage == "backdoor") {
    build_backdoor(lab, path);
  } else if (stage == "poison") {
    build_poison(lab, path);
  } else if (stage == "purify-eval") {
    report = eval_purify(lab);
    is_eval = true;
  } else if (stage == "certify") {
    report = eval_certify(lab, path.substr(0, path.size() - 5));
    is_eval = true;
  } else if (stage == "defend") {
    report = eval_defend(lab);
    is_eval = true;
  } else if (stage == "diagnose") {
    report = eval_diagnose(lab, path.substr(0, path.size() - 5));
    is_eval = true;
  } else {
    throw ConfigError("unknown stage: " + stage);
  }

  if (is_eval) {
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
            .count();
    report.write_json(path);
    report.write_csv(path.substr(0, path.size() - 5) + ".csv");
  }
  return path;
}

std::string Lab::require_or_build(const std::string& stage) {
  const std::string path = artifact_path(cfg, out_dir, stage);
  if (fs::exists(path)) return path;
  if (!can_build(stage)) throw StageDependencyError(stage, path);
  return run_stage_in(*this, stage);
}

std::vector<std::string> requested_stages(const Config& cfg) {
  const std::string raw = cfg.get_string("pipeline.stages");
  std::vector<std::string> stages;
  if (raw == "all") {
    for (const std::string& s : all_stages()) {
      if (s == "poison" && !cfg.get_bool("poison.enabled")) continue;
      stages.push_back(s);
    }
    return stages;
  }
  std::istringstream in(raw);
  std::string item;
  std::vector<std::string> wanted;
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    stage_def(item);  // validates the name
    wanted.push_back(item);
  }
  if (wanted.empty()) throw ConfigError("pipeline.stages: no stages requested");
  // Canonical execution order regardless of listing order.
  for (const std::string& s : all_stages()) {
    if (std::find(wanted.begin(), wanted.end(), s) != wanted.end())
      stages.push_back(s);
  }
  return stages;
}

}  // namespace

const std::vector<std::string>& all_stages() {
  static const std::vector<std::string> kOrder = {
      "diffusion", "classifiers", "trigger",  "backdoor", "poison",
      "purify-eval", "certify",   "defend",   "diagnose"};
  return kOrder;
}

std::uint64_t stage_hash(const Config& cfg, const std::string& stage) {
  const StageDef& def = stage_def(stage);
  std::uint64_t h = cfg.hash_keys(def.prefixes);
  for (const std::string& dep : def.deps) {
    const std::uint64_t dh = stage_hash(cfg, dep);
    // FNV-style chaining of the dependency hashes.
    for (int b = 0; b < 8; ++b) {
      h ^= (dh >> (8 * b)) & 0xff;
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::string artifact_path(const Config& cfg, const std::string& out_dir,
                          const std::string& stage) {
  const StageDef& def = stage_def(stage);
  return (fs::path(out_dir) / (stage + "-" + hash_hex(stage_hash(cfg, stage)) +
                               "." + def.ext))
      .string();
}

std::string run_stage(const Config& cfg, const std::string& out_dir,
                      const std::string& stage) {
  stage_def(stage);
  Lab lab(cfg, out_dir, {stage});
  return run_stage_in(lab, stage);
}

ExperimentReport run_pipeline(const Config& cfg, const std::string& out_dir) {
  const auto started = std::chrono::steady_clock::now();
  const std::vector<std::string> stages = requested_stages(cfg);
  Lab lab(cfg, out_dir, stages);

  ExperimentReport combined;
  combined.seed = cfg.get_u64("seed");
  combined.config_echo = cfg.effective_entries();

  std::uint64_t pipeline_hash = 1469598103934665603ull;
  for (const std::string& stage : stages) {
    const std::string path = run_stage_in(lab, stage);
    combined.info["artifact_" + stage] = path;
    const std::uint64_t h = stage_hash(cfg, stage);
    for (int b = 0; b < 8; ++b) {
      pipeline_hash ^= (h >> (8 * b)) & 0xff;
      pipeline_hash *= 1099511628211ull;
    }
    const StageDef& def = stage_def(stage);
    if (std::string(def.ext) == "json") {
      std::ifstream is(path);
      std::ostringstream buf;
      buf << is.rdbuf();
      const ExperimentReport stage_report = ExperimentReport::from_json(buf.str());
      for (const auto& [k, v] : stage_report.metrics) combined.metrics[k] = v;
      for (const auto& [k, v] : stage_report.series) combined.series[k] = v;
      for (const auto& [k, v] : stage_report.info) combined.info[k] = v;
    }
  }

  combined.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  combined.validate();
  fs::create_directories(out_dir);
  const std::string base =
      (fs::path(out_dir) / ("report-" + hash_hex(pipeline_hash))).string();
  combined.write_json(base + ".json");
  combined.write_csv(base + ".csv");
  combined.info["report"] = base + ".json";
  return combined;
}

std::string sweep_parameter_key(const std::string& parameter) {
  if (parameter == "alpha") return "trigger.alpha";
  if (parameter == "t_bar") return "purify.t_bar";
  if (parameter == "trigger_size") return "trigger.mask_len";
  if (parameter == "poison_rate") return "poison.rate";
  throw ConfigError("unknown sweep parameter: " + parameter);
}

std::vector<ExperimentReport> sensitivity_sweep(const Config& cfg,
                                                const std::string& parameter,
                                                const std::vector<std::string>& values,
                                                const std::string& out_dir) {
  const std::string key = sweep_parameter_key(parameter);
  std::vector<ExperimentReport> reports;
  for (const std::string& value : values) {
    Config run_cfg = cfg;
    run_cfg.set(key, value);
    if (parameter == "poison_rate") run_cfg.set("poison.enabled", "true");
    reports.push_back(run_pipeline(run_cfg, out_dir));
  }
  if (!values.empty()) {
    fs::create_directories(out_dir);
    const std::string path =
        (fs::path(out_dir) / ("sweep-" + parameter + "-" +
                              hash_hex(cfg.hash_keys(std::vector<std::string>{""})) +
                              ".csv"))
            .string();
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os << sweep_csv(parameter, values, reports);
  }
  return reports;
}

}  // namespace difflab::harness
