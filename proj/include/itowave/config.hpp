#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "itowave/audio.hpp"
#include "itowave/sampler.hpp"
#include "itowave/score_net.hpp"
#include "itowave/sde.hpp"
#include "itowave/training.hpp"

namespace itowave {

struct SplitConfig {
  std::uint64_t seed = 0;
  // 50 / 13100 each for valid and test.
  double valid_fraction = 50.0 / 13100.0;
  double test_fraction = 50.0 / 13100.0;
  bool operator==(const SplitConfig&) const = default;
};

struct PathsConfig {
  std::filesystem::path dataset_dir = "data";
  std::filesystem::path cache_dir = "cache";
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::filesystem::path output_dir = "out";
  bool operator==(const PathsConfig&) const = default;
};

struct RunConfig {
  audio::FeatureConfig feature;
  SdeSpec sde = SdeSpec::wide();
  ScoreNetConfig model;
  TrainingConfig train;
  SamplerConfig sample;
  SplitConfig split;
  PathsConfig paths;

  /// "paper", "wide" or "desk"; ConfigError otherwise.
  static RunConfig preset(const std::string& name);

  /// Per-section checks plus the cross-module ones: stride product == hop,
  /// mel_bins == n_mels, segment_length % hop == 0. Throws ConfigError.
  void validate() const;

  bool operator==(const RunConfig& o) const {
    return feature == o.feature && sde == o.sde && model == o.model && train == o.train &&
           sample == o.sample && split == o.split && paths == o.paths;
  }
};

/// Applies `section.key = value` lines on top of `base`. '#' starts a comment.
/// Unknown keys and malformed values throw ConfigError naming the line.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Every key with its current value and a one-line description.
std::string serialize_config(const RunConfig& config);
void save_config(const std::filesystem::path& path, const RunConfig& config);

/// Sets one key; used by parse_config and command-line overrides.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

}  // namespace itowave
