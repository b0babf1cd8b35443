#include "sdsa/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sdsa::pipeline {

const char* to_string(DataSource s) noexcept {
  return s == DataSource::synthetic ? "synthetic" : "observed";
}

DataSource data_source_from(const std::string& name) {
  if (name == "synthetic") return DataSource::synthetic;
  if (name == "observed") return DataSource::observed;
  throw ConfigError("step data must be 'synthetic' or 'observed', got '" + name + "'");
}

void ProtocolConfig::validate() const {
  if (steps.empty()) throw ConfigError("protocol: no steps");
  if (patience < 1) throw ConfigError("protocol: patience must be >= 1");
  if (batch_size < 1) throw ConfigError("protocol: batch_size must be >= 1");
  optim::AdamHyper{1.0, beta1, beta2, eps}.validate();
  bool seen_observed = false;
  for (const auto& s : steps) {
    if (s.epochs < 0) throw ConfigError("protocol step " + s.name + ": epochs must be >= 0");
    if (!(s.lr > 0.0)) throw ConfigError("protocol step " + s.name + ": lr must be positive");
    if (!(s.encoder_lr_multiplier >= 0.0)) {
      throw ConfigError("protocol step " + s.name + ": encoder_lr_multiplier must be >= 0");
    }
    if (!s.flux && !s.yield) {
      throw ConfigError("protocol step " + s.name + ": needs a flux or yield objective");
    }
    if (s.data == DataSource::observed) seen_observed = true;
    if (s.data == DataSource::synthetic && seen_observed) {
      throw ConfigError("protocol step " + s.name + ": synthetic steps must precede observed steps");
    }
  }
}

ProtocolConfig default_protocol() {
  ProtocolConfig p;
  p.steps = {
      {"synthetic_flux", DataSource::synthetic, 50, 1e-3, 1.0, true, false, false, false},
      {"synthetic_joint", DataSource::synthetic, 50, 1e-3, 1.0, true, true, false, false},
      {"synthetic_constrained", DataSource::synthetic, 50, 1e-3, 1.0, true, true, true, true},
      {"observed_flux", DataSource::observed, 100, 3e-4, 1.0, true, false, true, true},
      {"observed_yield", DataSource::observed, 100, 1e-4, 0.1, false, true, true, true},
  };
  return p;
}

void SplitFractions::validate() const {
  for (double f : {train, val, test}) {
    if (!(f > 0.0 && f < 1.0)) throw ConfigError("split fractions must lie in (0, 1)");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
}

std::map<RegionId, SplitIndices> split_by_region(const Dataset& ds, const regions::RegionConfig& rc,
                                                 const SplitFractions& fr, const nd::RngStream& rng) {
  fr.validate();
  const regions::Partition part = regions::partition(ds.samples, rc);
  std::map<RegionId, SplitIndices> out;
  for (const RegionId& id : rc.ids()) {
    const auto it = part.find(id);
    if (it == part.end() || it->second.empty()) {
      throw ConfigError("region " + id.name() + " has no samples");
    }
    std::vector<std::size_t> idx = it->second;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return ds.samples[a].sample_id < ds.samples[b].sample_id;
    });
    nd::RngStream s = nd::derive_stream(rng, "split:" + id.name());
    for (std::size_t i = idx.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(s.next_u64() % i);
      std::swap(idx[i - 1], idx[j]);
    }
    const double n = static_cast<double>(idx.size());
    const auto n_train = static_cast<std::size_t>(std::llround(n * fr.train));
    const auto n_val = static_cast<std::size_t>(std::llround(n * fr.val));
    if (n_train == 0 || n_val == 0 || n_train + n_val >= idx.size()) {
      throw ConfigError("region " + id.name() + " has too few samples (" +
                        std::to_string(idx.size()) + ") for a nonempty train/val/test split");
    }
    SplitIndices sp;
    sp.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    sp.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                  idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    sp.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
    out.emplace(id, std::move(sp));
  }
  return out;
}

const BundleEntry& TrainedBundle::entry(const std::string& tag) const {
  for (const auto& e : entries)
    if (e.tag == tag) return e;
  throw NotFoundError("bundle has no entry '" + tag + "'");
}

kg::LossWeights step_weights(const StepConfig& step, const kg::LossWeights& base) {
  kg::LossWeights w = base;
  if (!step.flux) w.flux_weight = 0.0;
  if (!step.yield) w.yield_weight = 0.0;
  if (!step.penalties) w.lambda_nonneg = w.lambda_budget = w.lambda_response = 0.0;
  if (!step.l2) w.lambda_l2 = 0.0;
  return w;
}

std::optional<kg::LossWeights> guard_weights(const std::vector<StepConfig>& steps,
                                             std::size_t index, const kg::LossWeights& base) {
  if (index >= steps.size()) throw ConfigError("guard_weights: step index out of range");
  bool flux = false, yield = false;
  for (std::size_t j = 0; j < index; ++j) {
    if (steps[j].data != steps[index].data) continue;
    flux = flux || steps[j].flux;
    yield = yield || steps[j].yield;
  }
  flux = flux && !steps[index].flux && base.flux_weight > 0.0;
  yield = yield && !steps[index].yield && base.yield_weight > 0.0;
  if (!flux && !yield) return std::nullopt;
  kg::LossWeights w = base;
  if (!flux) w.flux_weight = 0.0;
  if (!yield) w.yield_weight = 0.0;
  w.lambda_nonneg = w.lambda_budget = w.lambda_response = w.lambda_l2 = 0.0;
  return w;
}

namespace {

kg::LossBreakdown mean_breakdown(const std::vector<kg::LossBreakdown>& parts,
                                 const kg::LossWeights& w) {
  kg::LossBreakdown m;
  if (parts.empty()) return m;
  const double n = static_cast<double>(parts.size());
  for (const auto& p : parts) {
    m.mse_flux += p.mse_flux;
    m.mse_yield += p.mse_yield;
    m.pen_nonneg += p.pen_nonneg;
    m.pen_budget += p.pen_budget;
    m.pen_response += p.pen_response;
    m.reg_l2 += p.reg_l2;
    m.n_observed_flux_days += p.n_observed_flux_days;
  }
  m.mse_flux /= n;
  m.mse_yield /= n;
  m.pen_nonneg /= n;
  m.pen_budget /= n;
  m.pen_response /= n;
  m.reg_l2 /= n;
  m.total = kg::LossBreakdown::recompose(m, w);
  return m;
}

}  // namespace

StepResult run_step(const model::ModelConfig& mcfg, const model::ModelParams& start,
                    const StepConfig& step, int step_number, const std::string& stage,
                    const std::vector<kg::Example>& train, const std::vector<kg::Example>& val,
                    const ProtocolConfig& protocol, const kg::LossWeights& base_weights,
                    const kg::TargetScale& scale, double delta_normalized,
                    const nd::RngStream& rng, const EpochCallback& on_epoch,
                    const std::optional<kg::LossWeights>& guard) {
  if (train.empty()) throw ConfigError("step " + step.name + " (" + stage + "): empty training set");
  if (val.empty()) throw ConfigError("step " + step.name + " (" + stage + "): empty validation set");

  kg::LossOptions opt;
  opt.weights = step_weights(step, base_weights);
  opt.scale = scale;
  opt.delta_normalized = delta_normalized;
  opt.threads = protocol.threads;

  kg::LossOptions val_opt = opt;
  val_opt.weights.lambda_nonneg = val_opt.weights.lambda_budget = 0.0;
  val_opt.weights.lambda_response = val_opt.weights.lambda_l2 = 0.0;
  kg::LossOptions guard_opt = opt;
  if (guard) guard_opt.weights = *guard;

  StepResult out;
  out.params = start;
  model::ModelParams params = start;
  double best = kg::evaluate_loss(mcfg, params, val, val_opt).total;
  const double guard_start = guard ? kg::evaluate_loss(mcfg, params, val, guard_opt).total : 0.0;

  optim::ModelAdam adam(params, {step.lr, protocol.beta1, protocol.beta2, protocol.eps},
                        step.encoder_lr_multiplier);
  std::vector<std::size_t> order(train.size());
  std::vector<kg::Example> batch;
  int stale = 0;
  for (int epoch = 1; epoch <= step.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    nd::RngStream s = nd::derive_stream(rng, "epoch:" + std::to_string(epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(s.next_u64() % i)]);
    }
    std::vector<kg::LossBreakdown> parts;
    for (std::size_t lo = 0; lo < order.size(); lo += protocol.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + protocol.batch_size);
      batch.clear();
      for (std::size_t k = lo; k < hi; ++k) batch.push_back(train[order[k]]);
      kg::LossResult r = kg::total_loss(mcfg, params, batch, opt);
      if (!std::isfinite(r.breakdown.total)) {
        throw NumericError("step " + step.name + " (" + stage + "): non-finite loss in epoch " +
                           std::to_string(epoch));
      }
      parts.push_back(r.breakdown);
      adam.step(params, r.grads);
    }

    EpochRecord rec;
    rec.stage = stage;
    rec.step = step_number;
    rec.step_name = step.name;
    rec.epoch = epoch;
    rec.train = mean_breakdown(parts, opt.weights);
    rec.val_mse = kg::evaluate_loss(mcfg, params, val, val_opt).total;
    if (guard) rec.val_guard = kg::evaluate_loss(mcfg, params, val, guard_opt).total;
    rec.improved = rec.val_mse < best && (!guard || *rec.val_guard <= guard_start);
    out.records.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.improved) {
      best = rec.val_mse;
      out.params = params;
      stale = 0;
    } else if (++stale >= protocol.patience) {
      break;
    }
  }
  return out;
}

namespace {

Dataset gather(const Dataset& ds, const std::map<RegionId, SplitIndices>& splits,
               const std::vector<RegionId>& order, std::vector<std::size_t> SplitIndices::*member) {
  std::vector<Dataset> parts;
  for (const auto& id : order) parts.push_back(ds.select(splits.at(id).*member));
  std::vector<const Dataset*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  return Dataset::concat(ptrs);
}

}  // namespace

TrainedBundle train_five_step(const TrainConfig& cfg, const Dataset& synthetic,
                              const Dataset& observed, model::AwarenessLevel level) {
  cfg.regions.validate();
  cfg.loss.validate();
  cfg.protocol.validate();
  cfg.splits.validate();

  const Dataset syn = prep::interpolate_gaps(synthetic, cfg.max_gap);
  const Dataset obs = prep::interpolate_gaps(observed, cfg.max_gap);
  const nd::RngStream root(cfg.seed);
  const std::vector<RegionId> ids = cfg.regions.ids();

  const auto syn_splits =
      split_by_region(syn, cfg.regions, cfg.splits, nd::derive_stream(root, "split:synthetic"));
  const auto obs_splits =
      split_by_region(obs, cfg.regions, cfg.splits, nd::derive_stream(root, "split:observed"));

  TrainedBundle bundle;
  bundle.model = model::ModelConfig::for_level(level, cfg.shape.hidden_dim, cfg.shape.n_layers,
                                               cfg.shape.att_dim);
  bundle.model.validate();
  bundle.feature_layout = model::feature_layout(level);
  bundle.config_hash = cfg.config_hash;
  bundle.seed = cfg.seed;

  const Dataset syn_train = gather(syn, syn_splits, ids, &SplitIndices::train);
  const prep::NormStats norm = prep::fit_normalizer(syn_train, bundle.feature_layout);
  const kg::TargetScale scale = norm.target_scale();
  const double delta =
      cfg.loss.response_delta_t / norm.features[model::kTemperatureFeature].std;

  model::ModelParams params = model::init_params(bundle.model, nd::derive_stream(root, "init"));

  const auto& steps = cfg.protocol.steps;
  {
    const auto train = prep::make_examples(norm, syn_train);
    const auto val = prep::make_examples(norm, gather(syn, syn_splits, ids, &SplitIndices::val));
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (steps[i].data != DataSource::synthetic) continue;
      const nd::RngStream s = nd::derive_stream(root, "step:" + std::to_string(i + 1) + ":pretrain");
      StepResult r = run_step(bundle.model, params, steps[i], static_cast<int>(i + 1), "pretrain",
                              train, val, cfg.protocol, cfg.loss, scale, delta, s, cfg.on_epoch,
                              guard_weights(steps, i, cfg.loss));
      params = std::move(r.params);
      bundle.history.insert(bundle.history.end(), r.records.begin(), r.records.end());
    }
  }

  auto fine_tune = [&](const std::string& tag, const Dataset& train_ds, const Dataset& val_ds) {
    const auto train = prep::make_examples(norm, train_ds);
    const auto val = prep::make_examples(norm, val_ds);
    model::ModelParams p = params;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (steps[i].data != DataSource::observed) continue;
      const nd::RngStream s =
          nd::derive_stream(root, "step:" + std::to_string(i + 1) + ":" + tag);
      StepResult r = run_step(bundle.model, p, steps[i], static_cast<int>(i + 1), tag, train, val,
                              cfg.protocol, cfg.loss, scale, delta, s, cfg.on_epoch,
                              guard_weights(steps, i, cfg.loss));
      p = std::move(r.params);
      bundle.history.insert(bundle.history.end(), r.records.begin(), r.records.end());
    }
    return p;
  };

  if (level == model::AwarenessLevel::level3) {
    for (const auto& id : ids) {
      const auto& sp = obs_splits.at(id);
      model::ModelParams p = fine_tune(id.name(), obs.select(sp.train), obs.select(sp.val));
      p.region_tag = id;
      bundle.entries.push_back({id.name(), std::move(p), norm});
    }
  } else {
    model::ModelParams p = fine_tune(kPooledTag, gather(obs, obs_splits, ids, &SplitIndices::train),
                                     gather(obs, obs_splits, ids, &SplitIndices::val));
    bundle.entries.push_back({kPooledTag, std::move(p), norm});
  }
  return bundle;
}

}  // namespace sdsa::pipeline
