#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sdsa/model.hpp"

namespace sdsa::optim {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;

  bool operator==(const AdamHyper&) const = default;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  static AdamState zeros(std::size_t n) { return {std::vector<double>(n), std::vector<double>(n), 0}; }
};

/// One bias-corrected Adam update in place. `lr_scale`, when non-empty,
/// multiplies the learning rate per element.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamHyper& hyper, std::span<const double> lr_scale = {});

/// Per-element learning-rate multipliers in flatten() order: `encoder` for GRU
/// blocks, 1 elsewhere.
std::vector<double> group_lr_scale(const model::ModelParams& params, double encoder);

/// Adam over a ModelParams value. Moments live in flatten() order.
class ModelAdam {
 public:
  ModelAdam(const model::ModelParams& params, AdamHyper hyper, double encoder_lr_multiplier = 1.0);

  void step(model::ModelParams& params, const model::ModelParams& grads);
  const AdamState& state() const noexcept { return state_; }

 private:
  AdamHyper hyper_;
  AdamState state_;
  std::vector<double> scale_;
  std::vector<double> flat_, gflat_;
};

}  // namespace sdsa::optim
