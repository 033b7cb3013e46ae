#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "difflab/report.hpp"

namespace difflab::harness {

void ExperimentReport::validate() const {
  for (const auto& [name, value] : metrics) {
    if (!std::isfinite(value))
      throw std::runtime_error("report metric not finite: " + name);
  }
  for (const auto& [name, values] : series) {
    for (double v : values)
      if (!std::isfinite(v))
        throw std::runtime_error("report series not finite: " + name);
  }
}

std::string ExperimentReport::to_json() const {
  validate();
  nlohmann::json j;
  j["seed"] = seed;
  j["config"] = config_echo;
  j["metrics"] = metrics;
  j["series"] = series;
  j["info"] = info;
  j["wall_clock_seconds"] = wall_clock_seconds;
  return j.dump(2);
}

ExperimentReport ExperimentReport::from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  ExperimentReport r;
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config_echo = j.at("config").get<std::map<std::string, std::string>>();
  r.metrics = j.at("metrics").get<std::map<std::string, double>>();
  r.series = j.at("series").get<std::map<std::string, std::vector<double>>>();
  r.info = j.at("info").get<std::map<std::string, std::string>>();
  r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
  return r;
}

std::string ExperimentReport::metrics_json() const {
  return nlohmann::json(metrics).dump();
}

std::string ExperimentReport::to_csv() const {
  std::ostringstream os;
  bool first = true;
  for (const auto& [name, value] : metrics) {
    (void)value;
    os << (first ? "" : ",") << name;
    first = false;
  }
  os << '\n';
  first = true;
  char buf[64];
  for (const auto& [name, value] : metrics) {
    (void)name;
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    os << (first ? "" : ",") << buf;
    first = false;
  }
  os << '\n';
  return os.str();
}

void ExperimentReport::write_json(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os << to_json() << '\n';
}

void ExperimentReport::write_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os << to_csv();
}

std::string sweep_csv(const std::string& parameter,
                      const std::vector<std::string>& values,
                      const std::vector<ExperimentReport>& reports) {
  if (values.size() != reports.size())
    throw std::invalid_argument("sweep_csv: values/reports size mismatch");

  std::set<std::string> columns;
  for (const auto& r : reports)
    for (const auto& [name, value] : r.metrics) {
      (void)value;
      columns.insert(name);
    }

  std::ostringstream os;
  os << parameter;
  for (const auto& c : columns) os << ',' << c;
  os << '\n';
  char buf[64];
  for (std::size_t i = 0; i < reports.size(); ++i) {
    os << values[i];
    for (const auto& c : columns) {
      const auto it = reports[i].metrics.find(c);
      if (it == reports[i].metrics.end()) {
        os << ',';
      } else {
        std::snprintf(buf, sizeof(buf), "%.17g", it->second);
        os << ',' << buf;
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace difflab::harness
