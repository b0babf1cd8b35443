#include "sdsa/regions.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace sdsa::regions {

double BoundingBox::centroid_distance(double lat, double lon) const noexcept {
  return std::hypot(lat - centroid_lat(), lon - centroid_lon());
}

void RegionConfig::validate() const {
  if (regions.empty()) throw ConfigError("region config: no regions configured");
  std::set<std::string> names;
  for (const auto& r : regions) {
    const auto& b = r.box;
    if (!(b.lat_min < b.lat_max) || !(b.lon_min < b.lon_max)) {
      throw ConfigError("region config: degenerate bounding box for '" + r.id.name() + "'");
    }
    if (!names.insert(r.id.name()).second) {
      throw ConfigError("region config: duplicate region name '" + r.id.name() + "'");
    }
  }
}

const RegionEntry& RegionConfig::find(const RegionId& id) const {
  for (const auto& r : regions)
    if (r.id == id) return r;
  throw ConfigError("unknown region id '" + id.name() + "'");
}

std::vector<RegionId> RegionConfig::ids() const {
  std::vector<RegionId> out;
  out.reserve(regions.size());
  for (const auto& r : regions) out.push_back(r.id);
  return out;
}

RegionConfig default_region_config() {
  RegionConfig cfg;
  cfg.regions = {
      {RegionId("illinois"), {36.9, 42.6, -91.6, -87.4}},
      {RegionId("iowa"), {40.3, 43.6, -96.7, -90.1}},
      {RegionId("indiana"), {37.7, 41.8, -88.1, -84.7}},
  };
  cfg.out_of_region_policy = OutOfRegionPolicy::reject;
  return cfg;
}

namespace {

const RegionEntry* nearest_centroid(const std::vector<const RegionEntry*>& candidates, double lat,
                                    double lon) {
  const RegionEntry* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  // Strict comparison keeps the earliest configured region on exact ties.
  for (const RegionEntry* r : candidates) {
    const double d = r->box.centroid_distance(lat, lon);
    if (d < best_d) {
      best_d = d;
      best = r;
    }
  }
  return best;
}

}  // namespace

RegionId detect_region(double lat, double lon, const RegionConfig& cfg) {
  if (!(lat >= -90.0 && lat <= 90.0) || !(lon >= -180.0 && lon <= 180.0)) {
    std::ostringstream msg;
    msg << "detect_region: coordinate (" << lat << ", " << lon << ") out of range";
    throw DomainError(msg.str());
  }
  if (cfg.regions.empty()) throw ConfigError("detect_region: no regions configured");

  std::vector<const RegionEntry*> containing;
  for (const auto& r : cfg.regions)
    if (r.box.contains(lat, lon)) containing.push_back(&r);

  if (containing.size() == 1) return containing.front()->id;
  if (!containing.empty()) return nearest_centroid(containing, lat, lon)->id;

  if (cfg.out_of_region_policy == OutOfRegionPolicy::reject) {
    std::ostringstream msg;
    msg << "point (" << lat << ", " << lon << ") lies outside every configured region";
    throw ClassificationError(lat, lon, msg.str());
  }
  std::vector<const RegionEntry*> all;
  for (const auto& r : cfg.regions) all.push_back(&r);
  return nearest_centroid(all, lat, lon)->id;
}

Partition partition(const std::vector<SampleSeries>& samples, const RegionConfig& cfg) {
  Partition out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    try {
      out[detect_region(s.lat, s.lon, cfg)].push_back(i);
    } catch (const ClassificationError& e) {
      throw ClassificationError(e.lat(), e.lon(), "sample '" + s.sample_id + "': " + e.what());
    } catch (const DomainError& e) {
      throw DomainError("sample '" + s.sample_id + "': " + e.what());
    }
  }
  return out;
}

void ShiftReport::set_stats(const RegionId& region, std::string feature, FeatureStats stats) {
  stats_[{region, std::move(feature)}] = stats;
}

void ShiftReport::set_smd(const RegionId& a, const RegionId& b, std::string feature,
                          std::optional<double> smd) {
  const PairKey key = a < b ? PairKey{a, b} : PairKey{b, a};
  smd_[{key, std::move(feature)}] = smd;
}

const FeatureStats& ShiftReport::stats(const RegionId& region, const std::string& feature) const {
  auto it = stats_.find({region, feature});
  if (it == stats_.end()) {
    throw NotFoundError("shift report: no statistics for " + region.name() + "/" + feature);
  }
  return it->second;
}

std::optional<double> ShiftReport::smd(const RegionId& a, const RegionId& b,
                                       const std::string& feature) const {
  const PairKey key = a < b ? PairKey{a, b} : PairKey{b, a};
  auto it = smd_.find({key, feature});
  if (it == smd_.end()) {
    throw NotFoundError("shift report: no SMD for " + a.name() + "~" + b.name() + "/" + feature);
  }
  return it->second;
}

std::vector<RegionId> ShiftReport::regions() const {
  std::set<RegionId> ids;
  for (const auto& [key, _] : stats_) ids.insert(key.first);
  return {ids.begin(), ids.end()};
}

std::optional<double> ShiftReport::max_smd(const std::string& feature) const {
  std::optional<double> best;
  for (const auto& [key, value] : smd_) {
    if (key.second != feature || !value) continue;
    if (!best || *value > *best) best = value;
  }
  return best;
}

ShiftReport shift_report(const std::vector<SampleSeries>& samples, const Partition& partition) {
  ShiftReport report;
  for (const auto& [region, indices] : partition) {
    for (std::size_t k = 0; k < kDriverCount; ++k) {
      FeatureStats fs;
      fs.n_samples = indices.size();
      double sum = 0.0;
      for (std::size_t i : indices) {
        for (const auto& d : samples.at(i).days) {
          const double v = driver_at(d, k);
          if (std::isnan(v)) continue;
          sum += v;
          ++fs.n_values;
        }
      }
      fs.mean = fs.n_values > 0 ? sum / static_cast<double>(fs.n_values) : 0.0;
      if (fs.n_samples >= 2 && fs.n_values >= 2) {
        double ss = 0.0;
        for (std::size_t i : indices) {
          for (const auto& d : samples.at(i).days) {
            const double v = driver_at(d, k);
            if (std::isnan(v)) continue;
            ss += (v - fs.mean) * (v - fs.mean);
          }
        }
        fs.std = std::sqrt(ss / static_cast<double>(fs.n_values - 1));
      }
      report.set_stats(region, std::string(kDriverNames[k]), fs);
    }
  }

  for (auto a = partition.begin(); a != partition.end(); ++a) {
    for (auto b = std::next(a); b != partition.end(); ++b) {
      for (std::size_t k = 0; k < kDriverCount; ++k) {
        const std::string feature(kDriverNames[k]);
        const auto& sa = report.stats(a->first, feature);
        const auto& sb = report.stats(b->first, feature);
        std::optional<double> smd;
        if (sa.std && sb.std) {
          const double diff = std::abs(sa.mean - sb.mean);
          const double pooled = std::sqrt((*sa.std * *sa.std + *sb.std * *sb.std) / 2.0);
          if (pooled > 0.0) {
            smd = diff / pooled;
          } else if (diff == 0.0) {
            smd = 0.0;
          }
        }
        report.set_smd(a->first, b->first, feature, smd);
      }
    }
  }
  return report;
}

}  // namespace sdsa::regions
