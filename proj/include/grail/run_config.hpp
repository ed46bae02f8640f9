#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "grail/benchgen.hpp"
#include "grail/gnn.hpp"
#include "grail/trainer.hpp"

namespace grail {

// Flat `key = value` run configuration. Blank lines and lines starting with
// '#' are ignored; unknown keys and malformed values raise ConfigError.
struct RunConfig {
  GnnConfig gnn;
  TrainConfig train;
  SamplerConfig split_train;
  SamplerConfig split_test;
  double valid_fraction = 0.1;
  double test_fraction = 0.1;
  int eval_negatives = 50;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string features;  // optional entity feature file appended to node labels

  RunConfig();

  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);

  void set(std::string_view key, std::string_view value);
  std::string to_text() const;

  // Derived per-stage configs; each draws from its own named seed stream.
  TrainConfig train_config() const;
  SamplerConfig train_sampler() const;
  SamplerConfig test_sampler() const;
  std::uint64_t eval_seed() const;
  std::uint64_t split_seed() const;

  struct Key {
    std::string name;
    std::string default_value;
    std::string doc;
  };
  static std::vector<Key> keys();
  static std::string help_text();
};

}  // namespace grail
