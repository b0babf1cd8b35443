#include "sdsa/optim.hpp"

#include <algorithm>
#include <cmath>

namespace sdsa::optim {

void AdamHyper::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("adam: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam: beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam: beta2 must be in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("adam: eps must be positive");
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamHyper& hyper, std::span<const double> lr_scale) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.m.size() != n || state.v.size() != n ||
      (!lr_scale.empty() && lr_scale.size() != n)) {
    throw ShapeError("adam_step: parameter, gradient, moment and scale lengths differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i];
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
    state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    const double lr = lr_scale.empty() ? hyper.lr : hyper.lr * lr_scale[i];
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
  }
}

std::vector<double> group_lr_scale(const model::ModelParams& params, double encoder) {
  std::vector<double> out;
  out.reserve(params.parameter_count());
  for (const auto& b : params.blocks()) {
    const double s = b.group == model::BlockGroup::encoder ? encoder : 1.0;
    out.insert(out.end(), b.values.size(), s);
  }
  return out;
}

ModelAdam::ModelAdam(const model::ModelParams& params, AdamHyper hyper, double encoder_lr_multiplier)
    : hyper_(hyper), state_(AdamState::zeros(params.parameter_count())) {
  hyper_.validate();
  if (!(encoder_lr_multiplier >= 0.0)) throw ConfigError("adam: encoder multiplier must be >= 0");
  if (encoder_lr_multiplier != 1.0) scale_ = group_lr_scale(params, encoder_lr_multiplier);
}

void ModelAdam::step(model::ModelParams& params, const model::ModelParams& grads) {
  flat_ = params.flatten();
  gflat_ = grads.flatten();
  adam_step(flat_, gflat_, state_, hyper_, scale_);
  params.assign_flat(flat_);
}

}  // namespace sdsa::optim
