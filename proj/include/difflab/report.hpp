#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace difflab::harness {

// Machine-readable outcome of one experiment run.  `metrics` carries only
// numbers (all finite, mostly rates in [0,1]); `series` carries named numeric
// sequences (entropies, KL curves); `info` carries echoes such as artifact
// paths or example counts.  Timing lives outside `metrics` so bit-exact
// reproducibility checks can compare the metrics block alone.
struct ExperimentReport {
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config_echo;
  std::map<std::string, double> metrics;
  std::map<std::string, std::vector<double>> series;
  std::map<std::string, std::string> info;
  double wall_clock_seconds = 0.0;

  void validate() const;  // throws std::runtime_error on non-finite metrics

  std::string to_json() const;
  static ExperimentReport from_json(const std::string& text);

  // Deterministic serialization of the metrics block alone.
  std::string metrics_json() const;

  // Flat CSV: header of metric names (sorted), one value row.
  std::string to_csv() const;

  void write_json(const std::string& path) const;
  void write_csv(const std::string& path) const;
};

// Plot-ready sweep series: one row per swept value with every metric column.
std::string sweep_csv(const std::string& parameter,
                      const std::vector<std::string>& values,
                      const std::vector<ExperimentReport>& reports);

}  // namespace difflab::harness
