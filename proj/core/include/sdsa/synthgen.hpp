#pragma once

#include <map>
#include <string>
#include <vector>

#include "sdsa/ndmath.hpp"
#include "sdsa/regions.hpp"
#include "sdsa/series.hpp"

namespace sdsa::synth {

/// Location-dependent process parameters of the surrogate.
struct RegionProcessParams {
  double q10 = 2.0;
  double r_base = 1.0;        // gC·m⁻²·d⁻¹ at 10 °C
  double f_ra = 0.5;          // autotrophic fraction of GPP
  double lue = 0.05;          // gC per MJ
  double t_mean_c = 10.0;
  double t_amp_c = 14.0;
  double m_eq = 0.5;
  double k_om = 0.05;
  double harvest_index = 0.45;
  double noise_sigma = 0.1;   // gC·m⁻²·d⁻¹

  /// Throws ConfigError naming the first violated range.
  void validate() const;

  bool operator==(const RegionProcessParams&) const = default;
};

struct TrueFluxes {
  double ra = 0.0;
  double rh = 0.0;
};

inline constexpr double kMoistureMin = 0.05;
inline constexpr double kMoistureMax = 0.95;

/// 4·m·(1−m)
inline double moisture_factor(double m) noexcept { return 4.0 * m * (1.0 - m); }

/// Q10 heterotrophic respiration and GPP-proportional autotrophic respiration.
TrueFluxes process_model_step(const DailyDrivers& d, const RegionProcessParams& p, double om_pct);

/// Stochastic forcing knobs. Defaults reproduce the generator's documented
/// noise; zeroing them gives the deterministic seasonal skeleton.
struct DriverNoise {
  double t_sigma = 2.0;
  double srad_sigma = 1.5;
  double moisture_sigma = 0.03;
  double precip_mean = 3.0;

  bool operator==(const DriverNoise&) const = default;
};

struct DriverOptions {
  /// Day-of-year of the first generated day (phase of the seasonal cycle).
  int start_day = 0;
  DriverNoise noise{};

  bool operator==(const DriverOptions&) const = default;
};

/// Seasonal temperature/radiation, AR(1) moisture starting at m_eq,
/// exponential precipitation and light-use-efficiency GPP. Per day, draws are
/// consumed in the order temperature, radiation, moisture (not on the first
/// day), precipitation.
std::vector<DailyDrivers> generate_drivers(const RegionProcessParams& p, int n_days,
                                           nd::RngStream& rng, const DriverOptions& opt = {});

struct GenerationOptions {
  int n_samples = 100;
  int n_days = 365;
  DriverOptions drivers{};
};

/// Samples with coordinates drawn inside the region box and noisy targets.
/// Every sample draws from its own stream derived from `rng` with label
/// "sample:<index>", so samples are independent of generation order.
Dataset generate_region_dataset(const regions::RegionConfig& cfg, const RegionId& region,
                                const RegionProcessParams& p, const GenerationOptions& opt,
                                const nd::RngStream& rng);

/// Illinois / Iowa / Indiana parameter presets.
std::map<RegionId, RegionProcessParams> default_presets();

}  // namespace sdsa::synth
