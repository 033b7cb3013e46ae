#include <doctest.h>

#include <string>
#include <vector>

#include "difflab/config.hpp"

namespace harness = difflab::harness;
using harness::Config;
using harness::ConfigError;

TEST_SUITE("config") {

TEST_CASE("defaults cover the registry") {
  const Config cfg = Config::defaults();
  CHECK(cfg.get_int("diffusion.T") == 100);
  CHECK(cfg.get_double("trigger.alpha") == 0.05);
  CHECK(cfg.get_bool("backdoor.entangle"));
  CHECK(cfg.get_string("purify.sampler") == "ddpm");
  CHECK(cfg.effective_entries().size() == Config::registry().size());
}

TEST_CASE("parsing key=value lines with comments") {
  const Config cfg = Config::from_text(
      "# an experiment\n"
      "diffusion.T = 50   # shorter chain\n"
      "trigger.alpha=0.08\n"
      "\n"
      "backdoor.entangle = false\n");
  CHECK(cfg.get_int("diffusion.T") == 50);
  CHECK(cfg.get_double("trigger.alpha") == 0.08);
  CHECK_FALSE(cfg.get_bool("backdoor.entangle"));
  CHECK(cfg.get_int("diffusion.epochs") == 40);  // untouched default
  CHECK_FALSE(cfg.is_default("diffusion.T"));
  CHECK(cfg.is_default("diffusion.epochs"));
}

TEST_CASE("unknown keys are hard errors") {
  CHECK_THROWS_AS(Config::from_text("diffusion.t = 50\n"), ConfigError);
  CHECK_THROWS_AS(Config::from_text("difusion.T = 50\n"), ConfigError);
  Config cfg = Config::defaults();
  CHECK_THROWS_AS(cfg.set("nope", "1"), ConfigError);
}

TEST_CASE("malformed values raise config errors") {
  const Config cfg = Config::from_text("diffusion.T = soon\n");
  CHECK_THROWS_AS(cfg.get_int("diffusion.T"), ConfigError);
  const Config cfg2 = Config::from_text("trigger.alpha = 0.05x\n");
  CHECK_THROWS_AS(cfg2.get_double("trigger.alpha"), ConfigError);
  const Config cfg3 = Config::from_text("poison.enabled = maybe\n");
  CHECK_THROWS_AS(cfg3.get_bool("poison.enabled"), ConfigError);
  CHECK_THROWS_AS(Config::from_text("just a line\n"), ConfigError);
}

TEST_CASE("list values") {
  const Config cfg = Config::from_text(
      "classifier.hidden = 64, 32,16\n"
      "defend.reproject_eps = 0.1, 0.2\n");
  CHECK(cfg.get_int_list("classifier.hidden") == std::vector<int>{64, 32, 16});
  CHECK(cfg.get_double_list("defend.reproject_eps") == std::vector<double>{0.1, 0.2});
}

TEST_CASE("prefix hashing tracks only the named sections") {
  const Config base = Config::defaults();
  const std::vector<std::string> diffusion_keys = {"dataset.", "diffusion."};

  Config same = Config::defaults();
  same.set("certify.samples", "123");  // unrelated section
  CHECK(base.hash_keys(diffusion_keys) == same.hash_keys(diffusion_keys));

  Config changed = Config::defaults();
  changed.set("diffusion.epochs", "41");
  CHECK(base.hash_keys(diffusion_keys) != changed.hash_keys(diffusion_keys));

  // The seed always participates.
  Config reseeded = Config::defaults();
  reseeded.set("seed", "2");
  CHECK(base.hash_keys(diffusion_keys) != reseeded.hash_keys(diffusion_keys));
}

}  // TEST_SUITE
