#include "sdsa/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace sdsa::synth {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ConfigError(std::string("process params: ") + what);
}

}  // namespace

void RegionProcessParams::validate() const {
  require(q10 > 1.0, "q10 must be > 1");
  require(r_base > 0.0, "r_base must be > 0");
  require(f_ra > 0.0 && f_ra < 1.0, "f_ra must lie in (0, 1)");
  require(lue > 0.0, "lue must be > 0");
  require(std::isfinite(t_mean_c) && std::isfinite(t_amp_c), "temperatures must be finite");
  require(m_eq > 0.05 && m_eq < 0.95, "m_eq must lie in (0.05, 0.95)");
  require(k_om >= 0.0, "k_om must be >= 0");
  require(harvest_index > 0.0 && harvest_index < 1.0, "harvest_index must lie in (0, 1)");
  require(noise_sigma >= 0.0, "noise_sigma must be >= 0");
}

TrueFluxes process_model_step(const DailyDrivers& d, const RegionProcessParams& p, double om_pct) {
  TrueFluxes out;
  out.rh = p.r_base * std::pow(p.q10, (d.t_air_c - 10.0) / 10.0) *
           moisture_factor(d.moisture_frac) * (1.0 + p.k_om * om_pct);
  out.ra = p.f_ra * d.gpp;
  return out;
}

std::vector<DailyDrivers> generate_drivers(const RegionProcessParams& p, int n_days,
                                           nd::RngStream& rng, const DriverOptions& opt) {
  if (n_days < 1) throw ConfigError("generate_drivers: n_days must be >= 1");
  std::vector<DailyDrivers> days(static_cast<std::size_t>(n_days));
  double m = p.m_eq;
  for (int t = 0; t < n_days; ++t) {
    const double phase =
        std::sin(2.0 * std::numbers::pi * static_cast<double>(opt.start_day + t - 100) / 365.0);
    DailyDrivers& d = days[static_cast<std::size_t>(t)];
    d.t_air_c = p.t_mean_c + p.t_amp_c * phase + rng.normal(0.0, opt.noise.t_sigma);
    d.srad_mj = std::max(0.0, 12.0 + 8.0 * phase + rng.normal(0.0, opt.noise.srad_sigma));
    // m_0 = m_eq; the AR(1) update (and its draw) starts on the second day.
    if (t > 0) {
      m = std::clamp(m + 0.08 * (p.m_eq - m) + rng.normal(0.0, opt.noise.moisture_sigma),
                     kMoistureMin, kMoistureMax);
    }
    d.moisture_frac = m;
    d.precip_mm = opt.noise.precip_mean > 0.0 ? rng.exponential(opt.noise.precip_mean) : 0.0;
    d.gpp = p.lue * d.srad_mj * std::clamp(d.t_air_c / 25.0, 0.0, 1.0) * moisture_factor(m);
  }
  return days;
}

Dataset generate_region_dataset(const regions::RegionConfig& cfg, const RegionId& region,
                                const RegionProcessParams& p, const GenerationOptions& opt,
                                const nd::RngStream& rng) {
  const auto& box = cfg.find(region).box;
  p.validate();
  if (opt.n_samples < 1) throw ConfigError("generate_region_dataset: n_samples must be >= 1");
  if (opt.n_days < 1) throw ConfigError("generate_region_dataset: n_days must be >= 1");

  Dataset out;
  out.samples.reserve(static_cast<std::size_t>(opt.n_samples));
  out.targets.reserve(static_cast<std::size_t>(opt.n_samples));
  for (int i = 0; i < opt.n_samples; ++i) {
    nd::RngStream s = nd::derive_stream(rng, "sample:" + std::to_string(i));

    SampleSeries sample;
    char id[64];
    std::snprintf(id, sizeof id, "%s-%04d", region.name().c_str(), i);
    sample.sample_id = id;
    sample.lat = s.uniform(box.lat_min, box.lat_max);
    sample.lon = s.uniform(box.lon_min, box.lon_max);
    sample.clay_frac = s.uniform(0.1, 0.4);
    sample.om_pct = s.uniform(1.0, 6.0);
    sample.days = generate_drivers(p, opt.n_days, s, opt.drivers);

    TargetSeries target;
    const std::size_t n = sample.days.size();
    target.ra.resize(n);
    target.rh.resize(n);
    target.mask.assign(n, 1);
    double net = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const TrueFluxes f = process_model_step(sample.days[t], p, sample.om_pct);
      target.ra[t] = std::max(0.0, f.ra + s.normal(0.0, p.noise_sigma));
      target.rh[t] = std::max(0.0, f.rh + s.normal(0.0, p.noise_sigma));
      net += sample.days[t].gpp - f.ra;
    }
    target.yield_target = p.harvest_index * net * 0.01 + s.normal(0.0, p.noise_sigma);
    target.yield_observed = true;

    out.samples.push_back(std::move(sample));
    out.targets.push_back(std::move(target));
  }
  return out;
}

std::map<RegionId, RegionProcessParams> default_presets() {
  auto make = [](double q10, double r_base, double f_ra, double m_eq, double t_mean,
                 double t_amp) {
    RegionProcessParams p;
    p.q10 = q10;
    p.r_base = r_base;
    p.f_ra = f_ra;
    p.m_eq = m_eq;
    p.t_mean_c = t_mean;
    p.t_amp_c = t_amp;
    p.lue = 0.05;
    p.k_om = 0.05;
    p.harvest_index = 0.45;
    p.noise_sigma = 0.1;
    return p;
  };
  return {
      {RegionId("illinois"), make(2.0, 1.2, 0.45, 0.45, 11.0, 14.0)},
      {RegionId("iowa"), make(2.6, 0.9, 0.50, 0.55, 9.0, 15.0)},
      {RegionId("indiana"), make(1.7, 1.5, 0.40, 0.40, 11.5, 13.0)},
  };
}

}  // namespace sdsa::synth
