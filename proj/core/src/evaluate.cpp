#include "sdsa/evaluate.hpp"

#include <algorithm>
#include <cmath>

#include "sdsa/model.hpp"

namespace sdsa::pipeline {

FitStats fit_stats(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) {
    throw ShapeError("fit_stats: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(target.size()) + " targets");
  }
  FitStats out;
  out.n = pred.size();
  if (pred.empty()) return out;
  const double n = static_cast<double>(pred.size());
  double sse = 0.0, sp = 0.0, st = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    sse += e * e;
    sp += pred[i];
    st += target[i];
  }
  out.mse = sse / n;
  const double mp = sp / n, mt = st / n;
  double sst = 0.0, spp = 0.0, spt = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dp = pred[i] - mp, dt = target[i] - mt;
    sst += dt * dt;
    spp += dp * dp;
    spt += dp * dt;
  }
  if (sst > 0.0) out.r2 = 1.0 - sse / sst;
  if (sst > 0.0 && spp > 0.0) out.pearson = spt / std::sqrt(spp * sst);
  return out;
}

MetricCell evaluate(const model::ModelConfig& cfg, const BundleEntry& entry, const Dataset& test) {
  entry.params.check_shapes(cfg);
  if (entry.norm.feature_names != model::feature_layout(cfg.level)) {
    throw ConfigError("bundle entry " + entry.tag + ": normalizer layout does not match level " +
                      std::to_string(model::to_int(cfg.level)));
  }
  std::vector<double> ra_p, ra_t, rh_p, rh_t, y_p, y_t;
  model::ForwardCache cache;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& s = test.samples[i];
    const auto& t = test.targets[i];
    const kg::Example ex = prep::make_example(entry.norm, s, t);
    const model::Prediction p = model::forward(cfg, ex.inputs, entry.params, cache);
    for (std::size_t d = 0; d < t.mask.size(); ++d) {
      if (!t.mask[d]) continue;
      ra_p.push_back(prep::NormStats::denormalize(entry.norm.ra, p.ra_hat[d]));
      rh_p.push_back(prep::NormStats::denormalize(entry.norm.rh, p.rh_hat[d]));
      ra_t.push_back(t.ra[d]);
      rh_t.push_back(t.rh[d]);
    }
    if (t.yield_observed) {
      y_p.push_back(prep::NormStats::denormalize(entry.norm.yield, p.yield_hat));
      y_t.push_back(t.yield_target);
    }
  }
  MetricCell cell;
  cell.ra = fit_stats(ra_p, ra_t);
  cell.rh = fit_stats(rh_p, rh_t);
  cell.yield = fit_stats(y_p, y_t);
  cell.n_samples = test.size();
  return cell;
}

const EvalRecord& EvalMatrix::at(const std::string& source, const std::string& region) const {
  for (const auto& r : records)
    if (r.source == source && r.test_region == region) return r;
  throw NotFoundError("no evaluation cell for source " + source + " on region " + region);
}

std::vector<std::string> EvalMatrix::sources() const {
  std::vector<std::string> out;
  for (const auto& r : records)
    if (std::find(out.begin(), out.end(), r.source) == out.end()) out.push_back(r.source);
  return out;
}

std::string source_name(model::AwarenessLevel level, const std::string& tag) {
  return "L" + std::to_string(model::to_int(level)) + ":" + tag;
}

std::map<RegionId, Dataset> test_sets(const TrainConfig& cfg, const Dataset& observed) {
  const Dataset obs = prep::interpolate_gaps(observed, cfg.max_gap);
  const nd::RngStream root(cfg.seed);
  const auto splits =
      split_by_region(obs, cfg.regions, cfg.splits, nd::derive_stream(root, "split:observed"));
  std::map<RegionId, Dataset> out;
  for (const auto& [id, sp] : splits) out.emplace(id, obs.select(sp.test));
  return out;
}

EvalMatrix cross_region_matrix(const std::vector<const TrainedBundle*>& bundles,
                               const std::map<RegionId, Dataset>& tests,
                               const regions::RegionConfig& rc) {
  const auto ids = rc.ids();
  for (const auto& id : ids) {
    if (!tests.contains(id)) throw ConfigError("no test set for region " + id.name());
  }
  EvalMatrix m;
  for (const TrainedBundle* b : bundles) {
    for (const auto& e : b->entries) {
      for (const auto& id : ids) {
        m.records.push_back({source_name(b->level(), e.tag), id.name(),
                             evaluate(b->model, e, tests.at(id))});
      }
    }
  }
  return m;
}

}  // namespace sdsa::pipeline
