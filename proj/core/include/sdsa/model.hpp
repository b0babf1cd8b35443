#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sdsa/ndmath.hpp"
#include "sdsa/series.hpp"

namespace sdsa::model {

/// How much location information the predictor sees.
///   level1: no location anywhere (one size fits all)
///   level2: normalized lat/lon as inputs, shared parameters
///   level3: one parameter set per region, no lat/lon inputs
enum class AwarenessLevel { level1 = 1, level2 = 2, level3 = 3 };

AwarenessLevel level_from_int(int level);
int to_int(AwarenessLevel level) noexcept;

/// Names of the per-day input columns, in column order. Static descriptors are
/// broadcast over days; level2 appends lat and lon.
std::vector<std::string> feature_layout(AwarenessLevel level);

/// Column of air temperature in every layout.
inline constexpr std::size_t kTemperatureFeature = 0;

struct ModelConfig {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 64;
  std::size_t n_layers = 2;
  std::size_t att_dim = 32;
  AwarenessLevel level = AwarenessLevel::level1;

  /// Config whose input_dim matches the level's feature layout.
  static ModelConfig for_level(AwarenessLevel level, std::size_t hidden_dim,
                               std::size_t n_layers, std::size_t att_dim);

  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct GruLayerParams {
  nd::Mat w_z, w_r, w_h;  // hidden × input
  nd::Mat u_z, u_r, u_h;  // hidden × hidden
  nd::Vec b_z, b_r, b_h;

  bool operator==(const GruLayerParams&) const = default;
};

struct AttentionParams {
  nd::Mat w_a;  // att × hidden
  nd::Vec b_a;
  nd::Vec v_a;

  bool operator==(const AttentionParams&) const = default;
};

enum class BlockGroup { encoder, attention, head };

/// Mutable view of one named parameter block.
struct BlockView {
  std::string name;
  std::span<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool is_bias = false;
  BlockGroup group = BlockGroup::head;
};

struct ConstBlockView {
  std::string name;
  std::span<const double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool is_bias = false;
  BlockGroup group = BlockGroup::head;
};

/// Every trainable weight of the predictor. A region tag marks a
/// location-dependent parameter set. Gradients use the same type.
struct ModelParams {
  std::vector<GruLayerParams> layers;
  AttentionParams attention;
  nd::Mat w_f;  // 2 × hidden; row 0 → Ra, row 1 → Rh
  nd::Vec b_f;  // 2
  nd::Vec w_y;  // hidden
  nd::Vec b_y;  // 1
  std::optional<RegionId> region_tag;

  static ModelParams zeros(const ModelConfig& cfg);

  /// Blocks in a fixed canonical order (per layer z, r, h weights then biases;
  /// attention; flux head; yield head).
  std::vector<BlockView> blocks();
  std::vector<ConstBlockView> blocks() const;

  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> flat);

  /// Set every entry to zero, keeping shapes.
  void set_zero();
  /// this += other (shapes must match).
  void add(const ModelParams& other);
  void scale(double factor);

  /// Hash of the parameter bits; used to detect stale forward caches.
  std::uint64_t fingerprint() const;

  /// Shapes agree with the config. Throws ShapeError otherwise.
  void check_shapes(const ModelConfig& cfg) const;

  bool operator==(const ModelParams&) const = default;
};

/// Glorot-uniform weights, zero biases. Each block draws from its own stream
/// derived from `rng` and the block name.
ModelParams init_params(const ModelConfig& cfg, const nd::RngStream& rng);

/// One GRU step:
///   z = σ(W_z x + U_z h + b_z), r = σ(W_r x + U_r h + b_r),
///   h̃ = tanh(W_h x + U_h (r⊙h) + b_h), h' = (1−z)⊙h + z⊙h̃
nd::Vec gru_cell_forward(const nd::Vec& x, const nd::Vec& h_prev, const GruLayerParams& layer);

struct AttentionResult {
  nd::Vec context;
  nd::Vec weights;
};

/// Additive temporal attention: score_t = v·tanh(W h_t + b), softmax over t.
AttentionResult attention_pool(const std::vector<nd::Vec>& hidden, const AttentionParams& att);

/// Predictions in normalized target units.
struct Prediction {
  std::vector<double> ra_hat;
  std::vector<double> rh_hat;
  double yield_hat = 0.0;
  std::vector<double> attention_weights;
};

/// Gradient of a scalar loss with respect to a Prediction.
struct PredictionGrad {
  std::vector<double> d_ra;
  std::vector<double> d_rh;
  double d_yield = 0.0;

  static PredictionGrad zeros(std::size_t n_days);
};

/// Intermediates of one forward pass. Buffers are reused across calls, so a
/// cache can be kept per worker to avoid reallocating.
struct ForwardCache {
  std::size_t n_days = 0;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t att_dim = 0;
  std::uint64_t params_fingerprint = 0;
  bool valid = false;

  std::vector<double> inputs;                  // T × input_dim
  std::vector<std::vector<double>> h;          // per layer, T × hidden
  std::vector<std::vector<double>> z, r, htil; // per layer, T × hidden
  std::vector<double> u;                       // T × att (tanh activations)
  std::vector<double> weights;                 // T
  std::vector<double> context;                 // hidden

  // scratch, not part of the cached state
  std::vector<double> transposed;
  std::vector<double> proj;
};

/// Stacked GRU over the rows of `inputs` (T × input_dim, normalized feature
/// layout), per-day flux head and attention-pooled yield head.
/// Throws ConfigError when the column count does not match the config.
Prediction forward(const ModelConfig& cfg, const nd::Mat& inputs, const ModelParams& params,
                   ForwardCache& cache);

Prediction forward(const ModelConfig& cfg, const nd::Mat& inputs, const ModelParams& params);

/// Scratch buffers for backward; reusable across calls.
struct BackwardWorkspace {
  std::vector<double> d_top;
  std::vector<double> d_below;
  std::vector<double> da_z, da_r, da_h;
  std::vector<double> carry, dhp, d_rh, rh_prev, tmp;
};

/// Backpropagation through time. Accumulates (+=) into `grads`, which must be
/// shaped like `params`. Throws UsageError when the cache was produced by a
/// different parameter set or the upstream gradient has the wrong length.
void backward(const ForwardCache& cache, const ModelParams& params, const PredictionGrad& upstream,
              ModelParams& grads, BackwardWorkspace& ws);

ModelParams backward(const ForwardCache& cache, const ModelParams& params,
                     const PredictionGrad& upstream);

}  // namespace sdsa::model
