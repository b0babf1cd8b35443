#pragma once

#include <cstdint>
#include <string>

#include "sdsa/model.hpp"
#include "sdsa/ndmath.hpp"
#include "sdsa/regions.hpp"
#include "sdsa/synthgen.hpp"

namespace fixtures {

inline sdsa::nd::Mat random_inputs(std::size_t rows, std::size_t cols, std::uint64_t seed,
                                   double scale = 1.0) {
  sdsa::nd::RngStream rng(seed);
  sdsa::nd::Mat m(rows, cols);
  for (double& v : m.span()) v = rng.normal(0.0, scale);
  return m;
}

// Glorot weights plus small random biases, so bias paths are exercised too.
inline sdsa::model::ModelParams random_params(const sdsa::model::ModelConfig& cfg,
                                              std::uint64_t seed) {
  auto p = sdsa::model::init_params(cfg, sdsa::nd::RngStream(seed));
  sdsa::nd::RngStream rng(seed ^ 0x5bd1e995u);
  for (auto& b : p.blocks())
    if (b.is_bias)
      for (double& v : b.values) v = rng.normal(0.0, 0.1);
  return p;
}

inline sdsa::model::ModelConfig tiny_config(
    std::size_t hidden, std::size_t layers = 2, std::size_t att = 3,
    sdsa::model::AwarenessLevel level = sdsa::model::AwarenessLevel::level1) {
  return sdsa::model::ModelConfig::for_level(level, hidden, layers, att);
}

// Dataset from the default presets: n_per_region samples in each listed region.
inline sdsa::Dataset small_dataset(int n_per_region, int n_days, std::uint64_t seed,
                                   std::vector<std::string> names = {"illinois", "iowa",
                                                                     "indiana"}) {
  const auto cfg = sdsa::regions::default_region_config();
  const auto presets = sdsa::synth::default_presets();
  sdsa::synth::GenerationOptions opt;
  opt.n_samples = n_per_region;
  opt.n_days = n_days;
  sdsa::nd::RngStream rng(seed);
  std::vector<sdsa::Dataset> parts;
  for (const auto& name : names) {
    const sdsa::RegionId id(name);
    parts.push_back(sdsa::synth::generate_region_dataset(cfg, id, presets.at(id), opt,
                                                         sdsa::nd::derive_stream(rng, name)));
  }
  std::vector<const sdsa::Dataset*> ptrs;
  for (const auto& d : parts) ptrs.push_back(&d);
  return sdsa::Dataset::concat(ptrs);
}

}  // namespace fixtures
