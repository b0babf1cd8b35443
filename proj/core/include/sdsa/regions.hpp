#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sdsa/series.hpp"

namespace sdsa::regions {

struct BoundingBox {
  double lat_min = 0.0;
  double lat_max = 0.0;
  double lon_min = 0.0;
  double lon_max = 0.0;

  bool contains(double lat, double lon) const noexcept {
    return lat >= lat_min && lat <= lat_max && lon >= lon_min && lon <= lon_max;
  }
  double centroid_lat() const noexcept { return 0.5 * (lat_min + lat_max); }
  double centroid_lon() const noexcept { return 0.5 * (lon_min + lon_max); }
  /// Euclidean distance in degree space from the centroid.
  double centroid_distance(double lat, double lon) const noexcept;

  bool operator==(const BoundingBox&) const = default;
};

enum class OutOfRegionPolicy { reject, nearest };

struct RegionEntry {
  RegionId id;
  BoundingBox box;

  bool operator==(const RegionEntry&) const = default;
};

struct RegionConfig {
  std::vector<RegionEntry> regions;
  OutOfRegionPolicy out_of_region_policy = OutOfRegionPolicy::reject;

  /// Throws ConfigError on empty list, inverted boxes or duplicate names.
  void validate() const;
  /// Throws ConfigError for unknown ids.
  const RegionEntry& find(const RegionId& id) const;
  std::vector<RegionId> ids() const;

  bool operator==(const RegionConfig&) const = default;
};

/// illinois / iowa / indiana boxes in decimal degrees, reject policy.
RegionConfig default_region_config();

/// Point-in-box lookup. Overlaps resolve to the nearest box centroid; points
/// outside every box resolve the same way under the nearest policy and throw
/// ClassificationError under reject.
RegionId detect_region(double lat, double lon, const RegionConfig& cfg);

using Partition = std::map<RegionId, std::vector<std::size_t>>;

/// Buckets sample indices by detected region (indices ascending within each
/// bucket). Errors name the offending sample id.
Partition partition(const std::vector<SampleSeries>& samples, const RegionConfig& cfg);

struct FeatureStats {
  double mean = 0.0;
  /// Sample standard deviation over pooled days; absent when the bucket has
  /// fewer than two samples. Missing (NaN) days are skipped throughout.
  std::optional<double> std;
  std::size_t n_samples = 0;
  std::size_t n_values = 0;
};

/// Per-region, per-driver summary and pairwise standardized mean differences.
class ShiftReport {
 public:
  void set_stats(const RegionId& region, std::string feature, FeatureStats stats);
  void set_smd(const RegionId& a, const RegionId& b, std::string feature,
               std::optional<double> smd);

  const FeatureStats& stats(const RegionId& region, const std::string& feature) const;
  /// Symmetric in (a, b). Absent when either side lacks a standard deviation.
  std::optional<double> smd(const RegionId& a, const RegionId& b,
                            const std::string& feature) const;

  std::vector<RegionId> regions() const;
  /// Largest available SMD for a feature across region pairs.
  std::optional<double> max_smd(const std::string& feature) const;

 private:
  using PairKey = std::pair<RegionId, RegionId>;
  std::map<std::pair<RegionId, std::string>, FeatureStats> stats_;
  std::map<std::pair<PairKey, std::string>, std::optional<double>> smd_;
};

/// Statistics on per-day driver values pooled within each bucket.
ShiftReport shift_report(const std::vector<SampleSeries>& samples, const Partition& partition);

}  // namespace sdsa::regions
