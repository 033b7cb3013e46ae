// difflab: train, backdoor, purify, certify, and diagnose small diffusion
// models end to end.  Every subcommand reads a flat key=value config, writes
// content-addressed checkpoints under --out, and prints the artifact or
// report path it produced.

#include <cstdio>
#include <exception>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "difflab/config.hpp"
#include "difflab/pipeline.hpp"

namespace {

constexpr int kExitConfigError = 2;
constexpr int kExitMissingDependency = 3;

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config file");
  cmd->add_option("--out", opts.out_dir, "artifact/report directory")
      ->capture_default_str();
  cmd->add_option("--seed", opts.seed, "override the config seed");
}

difflab::harness::Config load_config(const CommonOpts& opts) {
  using difflab::harness::Config;
  Config cfg = opts.config_path.empty() ? Config::defaults()
                                        : Config::load(opts.config_path);
  if (opts.seed >= 0) cfg.set("seed", std::to_string(opts.seed));
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale diffusion purification/backdoor laboratory"};
  app.require_subcommand(1);

  // subcommand -> pipeline stage
  const std::vector<std::pair<std::string, std::string>> stage_commands = {
      {"train-diffusion", "diffusion"}, {"train-classifier", "classifiers"},
      {"make-trigger", "trigger"},      {"backdoor", "backdoor"},
      {"poison", "poison"},             {"purify-eval", "purify-eval"},
      {"certify", "certify"},           {"defend", "defend"},
      {"diagnose", "diagnose"},
  };
  const std::vector<std::pair<std::string, std::string>> descriptions = {
      {"train-diffusion", "train the benign denoiser"},
      {"train-classifier", "train the target classifier and surrogate pool"},
      {"make-trigger", "optimize the universal trigger against the surrogates"},
      {"backdoor", "fine-tune the backdoored diffusion model"},
      {"poison", "fine-tune a benign model on a trigger-polluted dataset"},
      {"purify-eval", "clean/robust accuracy and ASR through purification"},
      {"certify", "randomized-smoothing certification case study"},
      {"defend", "re-projection and adversarial-training countermeasures"},
      {"diagnose", "entropy detector and KL diagnostics"},
  };

  std::vector<CommonOpts> opts(stage_commands.size() + 2);
  std::vector<CLI::App*> cmds;
  for (std::size_t i = 0; i < stage_commands.size(); ++i) {
    CLI::App* c = app.add_subcommand(stage_commands[i].first, descriptions[i].second);
    add_common(c, opts[i]);
    cmds.push_back(c);
  }
  CLI::App* pipeline_cmd =
      app.add_subcommand("pipeline", "run the configured stage chain");
  add_common(pipeline_cmd, opts[stage_commands.size()]);
  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "sensitivity sweep (sweep.parameter over sweep.values)");
  add_common(sweep_cmd, opts[stage_commands.size() + 1]);

  CLI11_PARSE(app, argc, argv);

  try {
    for (std::size_t i = 0; i < stage_commands.size(); ++i) {
      if (cmds[i]->parsed()) {
        const auto cfg = load_config(opts[i]);
        const std::string path = difflab::harness::run_stage(
            cfg, opts[i].out_dir, stage_commands[i].second);
        std::printf("%s\n", path.c_str());
        return 0;
      }
    }
    if (pipeline_cmd->parsed()) {
      const auto& o = opts[stage_commands.size()];
      const auto cfg = load_config(o);
      const auto report = difflab::harness::run_pipeline(cfg, o.out_dir);
      std::printf("%s\n", report.info.at("report").c_str());
      return 0;
    }
    if (sweep_cmd->parsed()) {
      const auto& o = opts[stage_commands.size() + 1];
      const auto cfg = load_config(o);
      const std::string parameter = cfg.get_string("sweep.parameter");
      std::vector<std::string> values;
      {
        std::string raw = cfg.get_string("sweep.values");
        std::string item;
        std::istringstream in(raw);
        while (std::getline(in, item, ',')) {
          item.erase(0, item.find_first_not_of(" \t"));
          item.erase(item.find_last_not_of(" \t") + 1);
          if (!item.empty()) values.push_back(item);
        }
      }
      const auto reports =
          difflab::harness::sensitivity_sweep(cfg, parameter, values, o.out_dir);
      for (const auto& r : reports)
        std::printf("%s\n", r.info.at("report").c_str());
      return 0;
    }
  } catch (const difflab::harness::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfigError;
  } catch (const difflab::harness::StageDependencyError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kExitMissingDependency;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
