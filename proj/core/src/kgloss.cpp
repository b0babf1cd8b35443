#include "sdsa/kgloss.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "sdsa/parallel.hpp"

namespace sdsa::kg {

void LossWeights::validate() const {
  const double all[] = {flux_weight,   yield_weight,    lambda_nonneg,   lambda_budget,
                        lambda_response, lambda_l2, response_delta_t};
  for (double v : all) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError("loss weights must be finite and >= 0");
  }
  if (!(flux_weight > 0.0) && !(yield_weight > 0.0)) {
    throw ConfigError("loss weights: flux_weight or yield_weight must be positive");
  }
  if (!(response_delta_t > 0.0)) throw ConfigError("loss weights: response_delta_t must be > 0");
}

double LossBreakdown::recompose(const LossBreakdown& b, const LossWeights& w) noexcept {
  double total = w.flux_weight * b.mse_flux;
  total += w.yield_weight * b.mse_yield;
  total += w.lambda_nonneg * b.pen_nonneg;
  total += w.lambda_budget * b.pen_budget;
  total += w.lambda_response * b.pen_response;
  total += w.lambda_l2 * b.reg_l2;
  return total;
}

MaskedMse masked_mse(std::span<const double> pred, std::span<const double> target,
                     std::span<const std::uint8_t> mask) {
  if (pred.size() != target.size() || pred.size() != mask.size()) {
    throw ShapeError("masked_mse: lengths " + std::to_string(pred.size()) + ", " +
                     std::to_string(target.size()) + ", " + std::to_string(mask.size()));
  }
  MaskedMse out;
  out.grad.assign(pred.size(), 0.0);
  double sse = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    const double e = pred[i] - target[i];
    sse += e * e;
    ++out.n_observed;
  }
  if (out.n_observed == 0) {
    out.empty = true;
    return out;
  }
  const double n = static_cast<double>(out.n_observed);
  out.value = sse / n;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask[i]) out.grad[i] = 2.0 * (pred[i] - target[i]) / n;
  }
  return out;
}

FluxGrad penalty_nonneg(std::span<const double> ra, std::span<const double> rh) {
  FluxGrad out;
  out.d_ra.assign(ra.size(), 0.0);
  out.d_rh.assign(rh.size(), 0.0);
  const std::size_t n = ra.size() + rh.size();
  if (n == 0) return out;
  const double dn = static_cast<double>(n);
  double acc = 0.0;
  auto pass = [&](std::span<const double> p, std::vector<double>& g) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double neg = std::max(0.0, -p[i]);
      acc += neg * neg;
      g[i] = -2.0 * neg / dn;
    }
  };
  pass(ra, out.d_ra);
  pass(rh, out.d_rh);
  out.value = acc / dn;
  return out;
}

ValueAndGrad penalty_budget(std::span<const double> ra, std::span<const double> gpp) {
  if (ra.size() != gpp.size()) {
    throw ShapeError("penalty_budget: " + std::to_string(ra.size()) + " predicted days vs " +
                     std::to_string(gpp.size()) + " gpp days");
  }
  ValueAndGrad out;
  out.grad.assign(ra.size(), 0.0);
  if (ra.empty()) return out;
  const double n = static_cast<double>(ra.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double excess = std::max(0.0, ra[i] - gpp[i]);
    acc += excess * excess;
    out.grad[i] = 2.0 * excess / n;
  }
  out.value = acc / n;
  return out;
}

ResponseGap response_gap(std::span<const double> rh_base, std::span<const double> rh_warm) {
  if (rh_base.size() != rh_warm.size()) {
    throw ShapeError("response_gap: sequences of length " + std::to_string(rh_base.size()) +
                     " and " + std::to_string(rh_warm.size()));
  }
  ResponseGap out;
  out.d_base.assign(rh_base.size(), 0.0);
  out.d_warm.assign(rh_base.size(), 0.0);
  if (rh_base.empty()) return out;
  const double n = static_cast<double>(rh_base.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < rh_base.size(); ++i) {
    const double drop = std::max(0.0, rh_base[i] - rh_warm[i]);
    acc += drop * drop;
    out.d_base[i] = 2.0 * drop / n;
    out.d_warm[i] = -out.d_base[i];
  }
  out.value = acc / n;
  return out;
}

nd::Mat warm_inputs(const nd::Mat& inputs, double delta_normalized, std::size_t temperature_column) {
  if (temperature_column >= inputs.cols()) {
    throw ConfigError("temperature feature column " + std::to_string(temperature_column) +
                      " is outside the " + std::to_string(inputs.cols()) + "-column layout");
  }
  nd::Mat out = inputs;
  for (std::size_t t = 0; t < out.rows(); ++t) out(t, temperature_column) += delta_normalized;
  return out;
}

namespace {

std::vector<double> to_physical(std::span<const double> z, double mean, double std) {
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] * std + mean;
  return out;
}

void check_delta(double delta_normalized) {
  if (!(delta_normalized > 0.0) || !std::isfinite(delta_normalized)) {
    throw DomainError("response probe: temperature delta must be positive");
  }
}

bool any_positive(const std::vector<double>& v) {
  return std::any_of(v.begin(), v.end(), [](double x) { return x != 0.0; });
}

}  // namespace

ResponsePenalty penalty_response(const model::ModelConfig& cfg, const nd::Mat& inputs,
                                 const model::ModelParams& params, const TargetScale& scale,
                                 double delta_normalized) {
  check_delta(delta_normalized);
  const nd::Mat warm = warm_inputs(inputs, delta_normalized);
  model::ForwardCache base_cache, warm_cache;
  const model::Prediction base = model::forward(cfg, inputs, params, base_cache);
  const model::Prediction hot = model::forward(cfg, warm, params, warm_cache);
  const ResponseGap gap = response_gap(to_physical(base.rh_hat, scale.rh_mean, scale.rh_std),
                                       to_physical(hot.rh_hat, scale.rh_mean, scale.rh_std));
  ResponsePenalty out;
  out.value = gap.value;
  out.grads = params;
  out.grads.set_zero();
  if (!any_positive(gap.d_base)) return out;
  model::BackwardWorkspace ws;
  const std::size_t T = inputs.rows();
  model::PredictionGrad g = model::PredictionGrad::zeros(T);
  for (std::size_t t = 0; t < T; ++t) g.d_rh[t] = gap.d_base[t] * scale.rh_std;
  model::backward(base_cache, params, g, out.grads, ws);
  for (std::size_t t = 0; t < T; ++t) g.d_rh[t] = gap.d_warm[t] * scale.rh_std;
  model::backward(warm_cache, params, g, out.grads, ws);
  return out;
}

double l2_regularization(const model::ModelParams& params) {
  double acc = 0.0;
  for (const auto& b : params.blocks()) {
    if (b.is_bias) continue;
    for (double v : b.values) acc += v * v;
  }
  return acc;
}

void add_l2_gradient(const model::ModelParams& params, double lambda, model::ModelParams& grads) {
  const auto src = params.blocks();
  auto dst = grads.blocks();
  if (src.size() != dst.size()) throw ShapeError("add_l2_gradient: shape mismatch");
  for (std::size_t k = 0; k < src.size(); ++k) {
    if (src[k].is_bias) continue;
    if (src[k].values.size() != dst[k].values.size()) {
      throw ShapeError("add_l2_gradient: shape mismatch in " + src[k].name);
    }
    for (std::size_t i = 0; i < src[k].values.size(); ++i) {
      dst[k].values[i] += 2.0 * lambda * src[k].values[i];
    }
  }
}

// ---------------------------------------------------------------------------
// Batch objective

namespace {

struct Counts {
  std::size_t flux_elements = 0;  // 2 × observed days
  std::size_t flux_days = 0;
  std::size_t yields = 0;
};

Counts count_observations(std::span<const Example> batch) {
  Counts c;
  for (const auto& ex : batch) {
    const auto days = static_cast<std::size_t>(std::count_if(
        ex.mask.begin(), ex.mask.end(), [](std::uint8_t m) { return m != 0; }));
    c.flux_days += days;
    c.flux_elements += 2 * days;
    if (ex.yield_observed) ++c.yields;
  }
  return c;
}

void check_example(const model::ModelConfig& cfg, const Example& ex) {
  const std::size_t T = ex.inputs.rows();
  if (ex.inputs.cols() != cfg.input_dim) {
    throw ConfigError("example has " + std::to_string(ex.inputs.cols()) +
                      " features, model expects " + std::to_string(cfg.input_dim));
  }
  if (ex.ra_z.size() != T || ex.rh_z.size() != T || ex.mask.size() != T || ex.gpp.size() != T) {
    throw ShapeError("example target/mask/gpp lengths do not match its " + std::to_string(T) +
                     " input days");
  }
}

// Per-example unnormalized sums; batch means are formed afterwards.
struct PartTerms {
  double sse_flux = 0.0;
  double sse_yield = 0.0;
  double pen_nonneg = 0.0;
  double pen_budget = 0.0;
  double pen_response = 0.0;
};

struct Workspace {
  model::ForwardCache base, warm;
  model::BackwardWorkspace bw;
};

PartTerms example_terms(const model::ModelConfig& cfg, const model::ModelParams& params,
                        const Example& ex, const LossOptions& opt, const Counts& counts,
                        std::size_t batch_size, Workspace& ws, model::ModelParams* grads) {
  const LossWeights& w = opt.weights;
  const TargetScale& s = opt.scale;
  const std::size_t T = ex.inputs.rows();
  const double nb = static_cast<double>(batch_size);
  PartTerms out;

  const model::Prediction pred = model::forward(cfg, ex.inputs, params, ws.base);
  model::PredictionGrad up;
  if (grads) up = model::PredictionGrad::zeros(T);

  if (counts.flux_elements > 0) {
    const double n = static_cast<double>(counts.flux_elements);
    for (std::size_t t = 0; t < T; ++t) {
      if (!ex.mask[t]) continue;
      const double ea = pred.ra_hat[t] - ex.ra_z[t];
      const double eb = pred.rh_hat[t] - ex.rh_z[t];
      out.sse_flux += ea * ea;
      out.sse_flux += eb * eb;
      if (grads) {
        up.d_ra[t] += w.flux_weight * 2.0 * ea / n;
        up.d_rh[t] += w.flux_weight * 2.0 * eb / n;
      }
    }
  }
  if (ex.yield_observed && counts.yields > 0) {
    const double e = pred.yield_hat - ex.yield_z;
    out.sse_yield = e * e;
    if (grads) up.d_yield += w.yield_weight * 2.0 * e / static_cast<double>(counts.yields);
  }

  const std::vector<double> ra = to_physical(pred.ra_hat, s.ra_mean, s.ra_std);
  const std::vector<double> rh = to_physical(pred.rh_hat, s.rh_mean, s.rh_std);

  const FluxGrad nonneg = penalty_nonneg(ra, rh);
  out.pen_nonneg = nonneg.value;
  const ValueAndGrad budget = penalty_budget(ra, ex.gpp);
  out.pen_budget = budget.value;
  if (grads) {
    const double cn = w.lambda_nonneg / nb;
    const double cb = w.lambda_budget / nb;
    for (std::size_t t = 0; t < T; ++t) {
      up.d_ra[t] += (cn * nonneg.d_ra[t] + cb * budget.grad[t]) * s.ra_std;
      up.d_rh[t] += cn * nonneg.d_rh[t] * s.rh_std;
    }
  }

  std::optional<ResponseGap> gap;
  if (w.lambda_response > 0.0) {
    const nd::Mat warm = warm_inputs(ex.inputs, opt.delta_normalized);
    const model::Prediction hot = model::forward(cfg, warm, params, ws.warm);
    gap = response_gap(rh, to_physical(hot.rh_hat, s.rh_mean, s.rh_std));
    out.pen_response = gap->value;
  }

  if (grads) {
    const double cr = w.lambda_response / nb;
    const bool probe_active = gap && any_positive(gap->d_base);
    if (probe_active) {
      for (std::size_t t = 0; t < T; ++t) up.d_rh[t] += cr * gap->d_base[t] * s.rh_std;
    }
    model::backward(ws.base, params, up, *grads, ws.bw);
    if (probe_active) {
      model::PredictionGrad hot_up = model::PredictionGrad::zeros(T);
      for (std::size_t t = 0; t < T; ++t) hot_up.d_rh[t] = cr * gap->d_warm[t] * s.rh_std;
      model::backward(ws.warm, params, hot_up, *grads, ws.bw);
    }
  }
  return out;
}

LossResult run_batch(const model::ModelConfig& cfg, const model::ModelParams& params,
                     std::span<const Example> batch, const LossOptions& opt, bool want_grads) {
  if (batch.empty()) throw DomainError("total_loss: empty batch");
  opt.weights.validate();
  if (opt.weights.lambda_response > 0.0) check_delta(opt.delta_normalized);
  for (const auto& ex : batch) check_example(cfg, ex);
  params.check_shapes(cfg);

  const Counts counts = count_observations(batch);
  const std::size_t n = batch.size();
  const std::size_t workers = std::max<std::size_t>(1, std::min(opt.threads, n));

  std::vector<PartTerms> parts(n);
  std::vector<model::ModelParams> part_grads;
  if (want_grads) {
    model::ModelParams zero = params;
    zero.region_tag.reset();
    zero.set_zero();
    part_grads.assign(n, zero);
  }
  std::vector<Workspace> spaces(workers);
  parallel_for(n, workers, [&](std::size_t i, std::size_t worker) {
    parts[i] = example_terms(cfg, params, batch[i], opt, counts, n, spaces[worker],
                             want_grads ? &part_grads[i] : nullptr);
  });

  // Index-ordered reduction.
  PartTerms sum;
  for (const auto& p : parts) {
    sum.sse_flux += p.sse_flux;
    sum.sse_yield += p.sse_yield;
    sum.pen_nonneg += p.pen_nonneg;
    sum.pen_budget += p.pen_budget;
    sum.pen_response += p.pen_response;
  }
  const double nb = static_cast<double>(n);
  LossResult out;
  LossBreakdown& b = out.breakdown;
  b.n_observed_flux_days = counts.flux_days;
  b.mse_flux = counts.flux_elements ? sum.sse_flux / static_cast<double>(counts.flux_elements) : 0.0;
  b.mse_yield = counts.yields ? sum.sse_yield / static_cast<double>(counts.yields) : 0.0;
  b.pen_nonneg = sum.pen_nonneg / nb;
  b.pen_budget = sum.pen_budget / nb;
  b.pen_response = sum.pen_response / nb;
  b.reg_l2 = l2_regularization(params);
  b.total = LossBreakdown::recompose(b, opt.weights);

  if (want_grads) {
    out.grads = std::move(part_grads.front());
    for (std::size_t i = 1; i < n; ++i) out.grads.add(part_grads[i]);
    if (opt.weights.lambda_l2 > 0.0) add_l2_gradient(params, opt.weights.lambda_l2, out.grads);
  }
  return out;
}

}  // namespace

LossResult total_loss(const model::ModelConfig& cfg, const model::ModelParams& params,
                      std::span<const Example> batch, const LossOptions& opt) {
  return run_batch(cfg, params, batch, opt, true);
}

LossBreakdown evaluate_loss(const model::ModelConfig& cfg, const model::ModelParams& params,
                            std::span<const Example> batch, const LossOptions& opt) {
  return run_batch(cfg, params, batch, opt, false).breakdown;
}

}  // namespace sdsa::kg
