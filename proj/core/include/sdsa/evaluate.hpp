#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdsa/protocol.hpp"

namespace sdsa::pipeline {

/// Goodness of fit for one target. Fields are absent when undefined (no
/// observations, zero variance).
struct FitStats {
  std::optional<double> mse;
  std::optional<double> r2;
  std::optional<double> pearson;
  std::size_t n = 0;

  bool operator==(const FitStats&) const = default;
};

/// MSE, R² = 1 − SSE/SST about the target mean, Pearson r.
FitStats fit_stats(std::span<const double> pred, std::span<const double> target);

struct MetricCell {
  FitStats ra, rh, yield;
  std::size_t n_samples = 0;

  bool operator==(const MetricCell&) const = default;
};

/// Metrics in physical units: fluxes over observed days, yield over samples
/// with an observed yield.
MetricCell evaluate(const model::ModelConfig& cfg, const BundleEntry& entry, const Dataset& test);

struct EvalRecord {
  std::string source;       // e.g. "L3:iowa", "L1:pooled"
  std::string test_region;
  MetricCell cell;

  bool operator==(const EvalRecord&) const = default;
};

struct EvalMatrix {
  std::vector<EvalRecord> records;

  const EvalRecord& at(const std::string& source, const std::string& region) const;
  std::vector<std::string> sources() const;

  bool operator==(const EvalMatrix&) const = default;
};

std::string source_name(model::AwarenessLevel level, const std::string& tag);

/// Test split per region, reproducing the split used during training.
std::map<RegionId, Dataset> test_sets(const TrainConfig& cfg, const Dataset& observed);

/// Every bundle entry on every region's test set, rows in bundle/entry order,
/// columns in region-config order. Throws ConfigError when a configured region
/// has no test set.
EvalMatrix cross_region_matrix(const std::vector<const TrainedBundle*>& bundles,
                               const std::map<RegionId, Dataset>& tests,
                               const regions::RegionConfig& rc);

/// Bundle directory: bundle.json, params/<tag>.json, history.json.
void save_bundle(const TrainedBundle& bundle, const std::filesystem::path& dir);
TrainedBundle load_bundle(const std::filesystem::path& dir);

}  // namespace sdsa::pipeline
