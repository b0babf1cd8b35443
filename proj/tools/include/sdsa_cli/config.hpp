#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sdsa/kgloss.hpp"
#include "sdsa/protocol.hpp"
#include "sdsa/regions.hpp"
#include "sdsa/synthgen.hpp"

namespace sdsa::cli {

struct GeneratorConfig {
  int observed_samples_per_region = 100;
  int synthetic_samples_per_region = 100;
  int n_days = 365;
  synth::DriverOptions drivers;
  std::map<RegionId, synth::RegionProcessParams> presets;

  bool operator==(const GeneratorConfig&) const = default;
};

/// How the "observed" dataset is thinned relative to the generator output.
struct ObservationConfig {
  double flux_site_fraction = 1.0;  // samples with any flux observations
  double flux_day_fraction = 1.0;   // observed days within such a sample
  double yield_fraction = 1.0;
  double gap_probability = 0.0;     // chance a sample loses one driver run
  int gap_length = 3;

  bool operator==(const ObservationConfig&) const = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 42;
  regions::RegionConfig regions;
  GeneratorConfig generator;
  ObservationConfig observation;
  pipeline::ModelShape model;
  kg::LossWeights loss;
  pipeline::ProtocolConfig protocol;
  pipeline::SplitFractions splits;
  int max_gap = 7;
  std::vector<int> levels;

  /// Component invariants; throws ConfigError.
  void validate() const;
  pipeline::TrainConfig train_config() const;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Every key is required and unknown keys are rejected.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON rendering; parse_config(config_json(c)) == c.
std::string config_json(const ExperimentConfig& cfg);
/// 16 hex digits of FNV-1a over the canonical rendering.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace sdsa::cli
