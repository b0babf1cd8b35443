#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sdsa/model.hpp"
#include "sdsa/series.hpp"

namespace sdsa::kg {

struct LossWeights {
  double flux_weight = 1.0;
  double yield_weight = 1.0;
  double lambda_nonneg = 0.1;
  double lambda_budget = 0.1;
  double lambda_response = 0.1;
  double lambda_l2 = 1e-5;
  double response_delta_t = 1.0;  // °C

  void validate() const;

  bool operator==(const LossWeights&) const = default;
};

/// Components of the composite objective. `total` is recomposed from the
/// components in declaration order by `recompose`.
struct LossBreakdown {
  double total = 0.0;
  double mse_flux = 0.0;
  double mse_yield = 0.0;
  double pen_nonneg = 0.0;
  double pen_budget = 0.0;
  double pen_response = 0.0;
  double reg_l2 = 0.0;
  std::size_t n_observed_flux_days = 0;

  static double recompose(const LossBreakdown& b, const LossWeights& w) noexcept;

  bool operator==(const LossBreakdown&) const = default;
};

struct ValueAndGrad {
  double value = 0.0;
  std::vector<double> grad;
};

struct MaskedMse {
  double value = 0.0;
  std::vector<double> grad;
  std::size_t n_observed = 0;
  /// Set when nothing was observed; value is then 0 by convention.
  bool empty = false;
};

/// Mean squared error over observed elements; gradient 2(p−t)/n on observed
/// entries and 0 elsewhere. Throws ShapeError on length mismatch.
MaskedMse masked_mse(std::span<const double> pred, std::span<const double> target,
                     std::span<const std::uint8_t> mask);

struct FluxGrad {
  double value = 0.0;
  std::vector<double> d_ra;
  std::vector<double> d_rh;
};

/// mean over all 2T flux outputs of max(0, −p)².
FluxGrad penalty_nonneg(std::span<const double> ra, std::span<const double> rh);

/// mean over days of max(0, ra_t − gpp_t)². Gradient is with respect to ra.
ValueAndGrad penalty_budget(std::span<const double> ra, std::span<const double> gpp);

struct ResponseGap {
  double value = 0.0;
  std::vector<double> d_base;
  std::vector<double> d_warm;
};

/// mean over days of max(0, rh_base − rh_warm)²: Rh must not fall when the
/// air warms. Gradients are with respect to both sequences.
ResponseGap response_gap(std::span<const double> rh_base, std::span<const double> rh_warm);

/// Affine map between normalized model outputs and physical target units.
struct TargetScale {
  double ra_mean = 0.0, ra_std = 1.0;
  double rh_mean = 0.0, rh_std = 1.0;
  double yield_mean = 0.0, yield_std = 1.0;
};

/// Copy of `inputs` with the temperature column raised by `delta_normalized`.
nd::Mat warm_inputs(const nd::Mat& inputs, double delta_normalized,
                    std::size_t temperature_column = model::kTemperatureFeature);

struct ResponsePenalty {
  double value = 0.0;
  model::ModelParams grads;
};

/// Response-direction penalty for one sample: forward on the inputs and on a
/// copy with temperature raised by `delta_normalized`, compare Rh in physical
/// units, and backpropagate through both passes.
ResponsePenalty penalty_response(const model::ModelConfig& cfg, const nd::Mat& inputs,
                                 const model::ModelParams& params, const TargetScale& scale,
                                 double delta_normalized);

/// Σθ² over weights (biases excluded); gradient 2θ.
double l2_regularization(const model::ModelParams& params);
void add_l2_gradient(const model::ModelParams& params, double lambda, model::ModelParams& grads);

/// One normalized training example.
struct Example {
  nd::Mat inputs;                     // T × input_dim, normalized
  std::vector<double> ra_z, rh_z;     // normalized targets (0 where unobserved)
  std::vector<std::uint8_t> mask;     // flux observation mask
  double yield_z = 0.0;
  bool yield_observed = false;
  std::vector<double> gpp;            // physical units, for the budget penalty
};

struct LossOptions {
  LossWeights weights;
  TargetScale scale;
  /// Temperature raise in normalized input units (response_delta_t / std).
  double delta_normalized = 1.0;
  /// Worker threads for per-example evaluation; reductions are in index order
  /// regardless.
  std::size_t threads = 1;
};

struct LossResult {
  LossBreakdown breakdown;
  model::ModelParams grads;
};

/// Batch objective: each component averaged over the batch (flux MSE over
/// examples with observed days, yield MSE over examples with observed yield),
/// plus λ_l2·Σθ². Gradients are the exact sum of all component gradients.
LossResult total_loss(const model::ModelConfig& cfg, const model::ModelParams& params,
                      std::span<const Example> batch, const LossOptions& opt);

/// Same objective without gradients.
LossBreakdown evaluate_loss(const model::ModelConfig& cfg, const model::ModelParams& params,
                            std::span<const Example> batch, const LossOptions& opt);

}  // namespace sdsa::kg
