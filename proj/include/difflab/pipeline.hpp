#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "difflab/config.hpp"
#include "difflab/report.hpp"

namespace difflab::harness {

// Missing prerequisite checkpoint; carries the artifact path the stage
// needed.  The CLI maps it to exit code 3.
struct StageDependencyError : std::runtime_error {
  std::string stage;
  std::string artifact;
  StageDependencyError(std::string stage_name, std::string artifact_path);
};

// Build/evaluation stages in canonical order.  "poison" only runs when
// poison.enabled is set.
const std::vector<std::string>& all_stages();

// Content address of a stage under this config: stage hashes chain the
// hashes of their dependencies, so changing any config field invalidates
// every stage downstream of the field.
std::uint64_t stage_hash(const Config& cfg, const std::string& stage);

// out_dir/<stage>-<hash16>.<ext>
std::string artifact_path(const Config& cfg, const std::string& out_dir,
                          const std::string& stage);

// Runs one stage, loading prerequisites from disk (StageDependencyError when
// absent).  Build stages write model/trigger checkpoints; evaluation stages
// write report JSON/CSV.  Returns the artifact path.
std::string run_stage(const Config& cfg, const std::string& out_dir,
                      const std::string& stage);

// Runs the configured stage chain (pipeline.stages, default all) with
// checkpoint reuse and returns the combined report, which is also written to
// out_dir.
ExperimentReport run_pipeline(const Config& cfg, const std::string& out_dir);

// Sweepable parameter name -> config key ("alpha" -> trigger.alpha, "t_bar"
// -> purify.t_bar, "trigger_size" -> trigger.mask_len, "poison_rate" ->
// poison.rate).
std::string sweep_parameter_key(const std::string& parameter);

// One pipeline run per value (shared seed; untouched upstream stages are
// reused via their checkpoints).  Also writes a plot-ready CSV series.
std::vector<ExperimentReport> sensitivity_sweep(const Config& cfg,
                                                const std::string& parameter,
                                                const std::vector<std::string>& values,
                                                const std::string& out_dir);

}  // namespace difflab::harness
