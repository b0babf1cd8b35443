#pragma once

#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "sdsa/error.hpp"

namespace sdsa {

/// Short region identifier such as "iowa".
class RegionId {
 public:
  RegionId() = default;
  explicit RegionId(std::string name) : name_(std::move(name)) {
    if (name_.empty()) throw ConfigError("RegionId: empty name");
  }

  const std::string& name() const noexcept { return name_; }

  auto operator<=>(const RegionId&) const = default;
  bool operator==(const RegionId&) const = default;

 private:
  std::string name_;
};

/// One day of forcing. Units: °C, MJ·m⁻²·d⁻¹, mm, volumetric fraction, gC·m⁻²·d⁻¹.
struct DailyDrivers {
  double t_air_c = 0.0;
  double srad_mj = 0.0;
  double precip_mm = 0.0;
  double moisture_frac = 0.5;
  double gpp = 0.0;

  bool operator==(const DailyDrivers&) const = default;
};

inline constexpr std::size_t kDriverCount = 5;
inline constexpr std::array<std::string_view, kDriverCount> kDriverNames = {
    "t_air_c", "srad_mj", "precip_mm", "moisture_frac", "gpp"};

inline double& driver_at(DailyDrivers& d, std::size_t k) noexcept {
  switch (k) {
    case 0: return d.t_air_c;
    case 1: return d.srad_mj;
    case 2: return d.precip_mm;
    case 3: return d.moisture_frac;
    default: return d.gpp;
  }
}
inline double driver_at(const DailyDrivers& d, std::size_t k) noexcept {
  return driver_at(const_cast<DailyDrivers&>(d), k);
}

/// Marker for a driver cell that was empty on disk and awaits interpolation.
inline double missing_value() noexcept { return std::numeric_limits<double>::quiet_NaN(); }
inline bool is_missing(double v) noexcept { return std::isnan(v); }

/// One field-site sample: static descriptors plus its daily driver sequence.
struct SampleSeries {
  std::string sample_id;
  double lat = 0.0;
  double lon = 0.0;
  double clay_frac = 0.0;
  double om_pct = 0.0;
  std::vector<DailyDrivers> days;

  std::size_t length() const noexcept { return days.size(); }
  bool has_gaps() const noexcept;

  bool operator==(const SampleSeries&) const = default;
};

/// Daily Ra/Rh targets with an observation mask, plus the annual yield.
struct TargetSeries {
  std::vector<double> ra;
  std::vector<double> rh;
  std::vector<std::uint8_t> mask;
  double yield_target = 0.0;
  bool yield_observed = true;

  std::size_t length() const noexcept { return ra.size(); }
  std::size_t observed_days() const noexcept;

  bool operator==(const TargetSeries&) const = default;
};

/// Paired samples and targets, index-aligned.
struct Dataset {
  std::vector<SampleSeries> samples;
  std::vector<TargetSeries> targets;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }

  /// Subset in the given index order.
  Dataset select(const std::vector<std::size_t>& indices) const;
  /// Concatenation in argument order.
  static Dataset concat(const std::vector<const Dataset*>& parts);

  bool operator==(const Dataset&) const = default;
};

}  // namespace sdsa
