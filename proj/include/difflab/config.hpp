#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace difflab::harness {

// Raised for unreadable files, unknown keys, and malformed values; the CLI
// maps it to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat `section.key = value` text config.  Every key must appear in the
// built-in registry (unknown keys are hard errors), and every registered key
// has a default, so an empty file is a valid experiment.
class Config {
 public:
  static Config defaults();
  static Config from_text(const std::string& text);
  static Config load(const std::string& path);

  // Effective value: explicit entry if present, registry default otherwise.
  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;

  // Validates the key against the registry.
  void set(const std::string& key, const std::string& value);

  bool is_default(const std::string& key) const;

  // All registered keys with effective values, sorted by key.
  std::map<std::string, std::string> effective_entries() const;

  // FNV-1a over "key=value" lines of every key matching one of the prefixes
  // (prefix match on the section, e.g. "diffusion."), plus the seed.  This is
  // what content-addresses stage checkpoints.
  std::uint64_t hash_keys(std::span<const std::string> prefixes) const;

  static const std::map<std::string, std::string>& registry();

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace difflab::harness
