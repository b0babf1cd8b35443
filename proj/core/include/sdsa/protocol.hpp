#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sdsa/kgloss.hpp"
#include "sdsa/model.hpp"
#include "sdsa/ndmath.hpp"
#include "sdsa/optim.hpp"
#include "sdsa/preprocess.hpp"
#include "sdsa/regions.hpp"

namespace sdsa::pipeline {

enum class DataSource { synthetic, observed };

const char* to_string(DataSource s) noexcept;
DataSource data_source_from(const std::string& name);

/// One stage of the training schedule.
struct StepConfig {
  std::string name;
  DataSource data = DataSource::synthetic;
  int epochs = 50;
  double lr = 1e-3;
  double encoder_lr_multiplier = 1.0;
  bool flux = true;
  bool yield = false;
  bool penalties = false;
  bool l2 = false;

  bool operator==(const StepConfig&) const = default;
};

struct ProtocolConfig {
  std::vector<StepConfig> steps;
  int patience = 10;
  std::size_t batch_size = 8;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Worker threads; results do not depend on the count.
  std::size_t threads = 1;

  /// Synthetic steps must all precede observed steps.
  void validate() const;

  bool operator==(const ProtocolConfig&) const = default;
};

/// synthetic flux → synthetic joint → synthetic + constraints → observed
/// flux → observed yield.
ProtocolConfig default_protocol();

struct SplitFractions {
  double train = 0.7;
  double val = 0.15;
  double test = 0.15;

  void validate() const;

  bool operator==(const SplitFractions&) const = default;
};

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

/// Per region (by detected location): sample ids sorted, shuffled with a
/// stream derived from `rng` and the region name, then cut train/val/test.
/// Throws ConfigError naming a region whose bucket or any split is empty.
std::map<RegionId, SplitIndices> split_by_region(const Dataset& ds, const regions::RegionConfig& rc,
                                                 const SplitFractions& fr, const nd::RngStream& rng);

struct ModelShape {
  std::size_t hidden_dim = 64;
  std::size_t n_layers = 2;
  std::size_t att_dim = 32;

  bool operator==(const ModelShape&) const = default;
};

struct EpochRecord;
using EpochCallback = std::function<void(const EpochRecord&)>;

struct TrainConfig {
  regions::RegionConfig regions;
  ModelShape shape;
  kg::LossWeights loss;
  ProtocolConfig protocol;
  SplitFractions splits;
  int max_gap = 7;
  std::uint64_t seed = 42;
  std::string config_hash;
  /// Called after every epoch, in training order.
  EpochCallback on_epoch;
};

struct EpochRecord {
  std::string stage;  // "pretrain", "pooled" or a region name
  int step = 0;       // 1-based position in the schedule
  std::string step_name;
  int epoch = 0;      // 1-based
  kg::LossBreakdown train;
  double val_mse = 0.0;
  std::optional<double> val_guard;  // earlier targets' validation loss, when guarded
  bool improved = false;

  bool operator==(const EpochRecord&) const = default;
};

struct BundleEntry {
  std::string tag;  // region name or "pooled"
  model::ModelParams params;
  prep::NormStats norm;

  bool operator==(const BundleEntry&) const = default;
};

inline constexpr int kBundleFormatVersion = 1;
inline constexpr const char* kPooledTag = "pooled";

struct TrainedBundle {
  int format_version = kBundleFormatVersion;
  model::ModelConfig model;
  std::vector<std::string> feature_layout;
  std::vector<BundleEntry> entries;
  std::vector<EpochRecord> history;
  std::string config_hash;
  std::uint64_t seed = 0;

  model::AwarenessLevel level() const noexcept { return model.level; }
  const BundleEntry& entry(const std::string& tag) const;

  bool operator==(const TrainedBundle&) const = default;
};

/// Splits both datasets by region, fits one normalizer on the pooled synthetic
/// training split, pretrains through the synthetic steps once, then runs the
/// observed steps per region (level3) or on the pooled observed training
/// split (level1/level2). Gaps are interpolated before anything else.
TrainedBundle train_five_step(const TrainConfig& cfg, const Dataset& synthetic,
                              const Dataset& observed, model::AwarenessLevel level);

// Building blocks, exposed for tests.

struct StepResult {
  model::ModelParams params;  // best-validation parameters
  std::vector<EpochRecord> records;
};

/// Runs one schedule step with minibatch Adam and early stopping on the
/// validation loss of the step's own data terms; returns the parameters of the
/// best epoch. With `guard`, an epoch only counts as an improvement if the
/// validation loss under `guard` is no higher than at the start of the step.
StepResult run_step(const model::ModelConfig& mcfg, const model::ModelParams& start,
                    const StepConfig& step, int step_number, const std::string& stage,
                    const std::vector<kg::Example>& train, const std::vector<kg::Example>& val,
                    const ProtocolConfig& protocol, const kg::LossWeights& base_weights,
                    const kg::TargetScale& scale, double delta_normalized,
                    const nd::RngStream& rng, const EpochCallback& on_epoch = {},
                    const std::optional<kg::LossWeights>& guard = std::nullopt);

/// Loss weights in effect for a step (disabled terms zeroed).
kg::LossWeights step_weights(const StepConfig& step, const kg::LossWeights& base);

/// Data-only weights for the targets fitted by earlier steps on the same data
/// source that step `index` does not train itself; nullopt when there are none.
std::optional<kg::LossWeights> guard_weights(const std::vector<StepConfig>& steps,
                                             std::size_t index, const kg::LossWeights& base);

}  // namespace sdsa::pipeline
