#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "difflab/config.hpp"

namespace difflab::harness {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

const std::map<std::string, std::string>& Config::registry() {
  static const std::map<std::string, std::string> kRegistry = {
      {"seed", "1"},
      {"threads", "1"},

      {"dataset.kind", "gaussian_mixture"},
      {"dataset.dims", "26"},
      {"dataset.classes", "4"},
      {"dataset.train_size", "4000"},
      {"dataset.test_size", "1000"},
      {"dataset.core_dims", "2"},
      {"dataset.center_scale", "3.0"},
      {"dataset.core_sigma", "1.2"},
      {"dataset.texture_delta", "0.1"},
      {"dataset.texture_sigma", "0.1"},
      {"dataset.image_side", "6"},
      {"dataset.pixel_sigma", "0.1"},
      {"dataset.clamp", "true"},

      {"diffusion.T", "100"},
      {"diffusion.beta_start", "1e-4"},
      {"diffusion.beta_end", "0.2"},
      {"diffusion.time_embed", "8"},
      {"diffusion.hidden", "128,128"},
      {"diffusion.activation", "tanh"},
      {"diffusion.epochs", "150"},
      {"diffusion.batch", "128"},
      {"diffusion.lr", "2e-4"},

      {"classifier.hidden", "128,128"},
      {"classifier.activation", "relu"},
      {"classifier.epochs", "25"},
      {"classifier.batch", "128"},
      {"classifier.lr", "1e-3"},

      {"surrogate.count", "3"},

      {"trigger.alpha", "0.3"},
      {"trigger.mask_start", "0"},
      {"trigger.mask_len", "-1"},
      {"trigger.steps", "300"},
      {"trigger.lr", "0.1"},
      {"trigger.batch", "256"},
      {"trigger.mode", "untargeted"},
      {"trigger.target_class", "0"},

      {"backdoor.lambda", "1.0"},
      {"backdoor.truncation", "30"},
      {"backdoor.entangle", "true"},
      {"backdoor.epochs", "20"},
      {"backdoor.batch", "128"},
      {"backdoor.lr", "2e-4"},
      {"backdoor.variant", "symmetric"},

      {"poison.enabled", "false"},
      {"poison.rate", "0.01"},
      {"poison.epochs", "20"},
      {"poison.batch", "128"},
      {"poison.lr", "2e-4"},

      {"pgd.epsilon", "0.3"},
      {"pgd.step", "0.075"},
      {"pgd.iters", "30"},
      {"pgd.mode", "untargeted"},
      {"pgd.target_class", "0"},

      {"purify.t_bar", "13"},
      {"purify.sampler", "ddpm"},

      {"eval.examples", "1000"},

      {"certify.sigma", "0.5"},
      {"certify.samples", "2000"},
      {"certify.selection", "0"},
      {"certify.confidence", "0.999"},
      {"certify.abstain", "true"},
      {"certify.examples", "50"},
      {"certify.radius", "0.25"},
      {"certify.reverse_steps", "1"},

      {"defend.reproject_eps", "0.3,0.6"},
      {"defend.adv_epochs", "0"},
      {"defend.adv_pgd_iters", "8"},

      {"diagnose.t_large", "100"},
      {"diagnose.trials", "5"},
      {"diagnose.per_trial", "100"},
      {"diagnose.kl_samples", "0"},

      {"pipeline.stages", "all"},

      {"sweep.parameter", "alpha"},
      {"sweep.values", ""},
  };
  return kRegistry;
}

Config Config::defaults() { return Config{}; }

Config Config::from_text(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    cfg.set(key, value);
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return from_text(buf.str());
}

void Config::set(const std::string& key, const std::string& value) {
  if (!registry().count(key)) throw ConfigError("unknown config key: " + key);
  values_[key] = value;
}

bool Config::is_default(const std::string& key) const {
  return !values_.count(key);
}

std::string Config::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it != values_.end()) return it->second;
  const auto reg = registry().find(key);
  if (reg == registry().end()) throw ConfigError("unknown config key: " + key);
  return reg->second;
}

double Config::get_double(const std::string& key) const {
  const std::string v = get_string(key);
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": not a number: '" + v + "'");
  }
}

int Config::get_int(const std::string& key) const {
  const std::string v = get_string(key);
  try {
    std::size_t pos = 0;
    const long n = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<int>(n);
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": not an integer: '" + v + "'");
  }
}

std::uint64_t Config::get_u64(const std::string& key) const {
  const std::string v = get_string(key);
  try {
    std::size_t pos = 0;
    const unsigned long long n = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": not an unsigned integer: '" + v + "'");
  }
}

bool Config::get_bool(const std::string& key) const {
  const std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key " + key + ": not a boolean: '" + v + "'");
}

std::vector<int> Config::get_int_list(const std::string& key) const {
  std::vector<int> out;
  std::istringstream in(get_string(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    const std::string t = trim(item);
    if (t.empty()) continue;
    try {
      std::size_t pos = 0;
      out.push_back(static_cast<int>(std::stol(t, &pos)));
      if (pos != t.size()) throw std::invalid_argument(t);
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": bad integer list entry '" + t + "'");
    }
  }
  return out;
}

std::vector<double> Config::get_double_list(const std::string& key) const {
  std::vector<double> out;
  std::istringstream in(get_string(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    const std::string t = trim(item);
    if (t.empty()) continue;
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(t, &pos));
      if (pos != t.size()) throw std::invalid_argument(t);
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": bad number list entry '" + t + "'");
    }
  }
  return out;
}

std::map<std::string, std::string> Config::effective_entries() const {
  std::map<std::string, std::string> out;
  for (const auto& [key, def] : registry()) {
    const auto it = values_.find(key);
    out[key] = it != values_.end() ? it->second : def;
  }
  return out;
}

std::uint64_t Config::hash_keys(std::span<const std::string> prefixes) const {
  std::uint64_t h = 1469598103934665603ull;
  const auto mix = [&h](const std::string& s) {
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
  };
  // Seed always participates: every stage is seed-addressed.
  mix("seed=" + get_string("seed") + "\n");
  for (const auto& [key, value] : effective_entries()) {
    const bool wanted = std::any_of(prefixes.begin(), prefixes.end(),
                                    [&key](const std::string& p) {
                                      return key.rfind(p, 0) == 0;
                                    });
    if (wanted) mix(key + "=" + value + "\n");
  }
  return h;
}

}  // namespace difflab::harness
