#include "sdsa/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace sdsa::prep {

SampleSeries interpolate_gaps(const SampleSeries& series, int max_gap) {
  if (max_gap < 0) throw ConfigError("interpolate_gaps: max_gap must be >= 0");
  SampleSeries out = series;
  const std::size_t T = out.days.size();
  const auto limit = static_cast<std::size_t>(max_gap);
  for (std::size_t k = 0; k < kDriverCount; ++k) {
    auto fail = [&](std::size_t a, std::size_t b, const char* why) {
      throw DataError("sample " + series.sample_id + ": " + std::string(kDriverNames[k]) +
                      " missing on days " + std::to_string(a) + ".." + std::to_string(b) + " (" +
                      why + ", max_gap " + std::to_string(max_gap) + ")");
    };
    std::size_t t = 0;
    while (t < T) {
      if (!is_missing(driver_at(out.days[t], k))) {
        ++t;
        continue;
      }
      std::size_t end = t;
      while (end < T && is_missing(driver_at(out.days[end], k))) ++end;
      const std::size_t run = end - t;
      if (t == 0 && end == T) fail(t, end - 1, "no observed value");
      if (run > limit) fail(t, end - 1, "gap too long");
      if (t == 0) {
        const double v = driver_at(out.days[end], k);
        for (std::size_t i = t; i < end; ++i) driver_at(out.days[i], k) = v;
      } else if (end == T) {
        const double v = driver_at(out.days[t - 1], k);
        for (std::size_t i = t; i < end; ++i) driver_at(out.days[i], k) = v;
      } else {
        const double a = driver_at(out.days[t - 1], k);
        const double b = driver_at(out.days[end], k);
        const double span = static_cast<double>(end - (t - 1));
        for (std::size_t i = t; i < end; ++i) {
          const double w = static_cast<double>(i - (t - 1)) / span;
          driver_at(out.days[i], k) = a + (b - a) * w;
        }
      }
      t = end;
    }
  }
  return out;
}

Dataset interpolate_gaps(const Dataset& ds, int max_gap) {
  Dataset out = ds;
  for (auto& s : out.samples) {
    if (s.has_gaps()) s = interpolate_gaps(s, max_gap);
  }
  return out;
}

std::size_t NormStats::feature_index(const std::string& name) const {
  const auto it = std::find(feature_names.begin(), feature_names.end(), name);
  if (it == feature_names.end()) throw ConfigError("feature '" + name + "' not in the layout");
  return static_cast<std::size_t>(it - feature_names.begin());
}

namespace {

double static_value(const SampleSeries& s, const std::string& name) {
  if (name == "clay_frac") return s.clay_frac;
  if (name == "om_pct") return s.om_pct;
  if (name == "lat") return s.lat;
  if (name == "lon") return s.lon;
  throw ConfigError("unknown feature '" + name + "'");
}

// Column source: driver index, or kDriverCount for a static descriptor.
std::vector<std::size_t> column_sources(const std::vector<std::string>& layout) {
  std::vector<std::size_t> src(layout.size(), kDriverCount);
  for (std::size_t c = 0; c < layout.size(); ++c) {
    for (std::size_t k = 0; k < kDriverCount; ++k) {
      if (layout[c] == kDriverNames[k]) src[c] = k;
    }
  }
  return src;
}

Moments moments(const std::vector<double>& v) {
  Moments m;
  if (v.empty()) return m;
  const double n = static_cast<double>(v.size());
  double sum = 0.0;
  for (double x : v) sum += x;
  m.mean = sum / n;
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.std = std::max(std::sqrt(ss / n), kStdFloor);
  return m;
}

}  // namespace

nd::Mat feature_matrix(const SampleSeries& s, const std::vector<std::string>& layout) {
  const auto src = column_sources(layout);
  const std::size_t T = s.days.size();
  nd::Mat m(T, layout.size());
  for (std::size_t c = 0; c < layout.size(); ++c) {
    if (src[c] < kDriverCount) {
      for (std::size_t t = 0; t < T; ++t) m(t, c) = driver_at(s.days[t], src[c]);
    } else {
      const double v = static_value(s, layout[c]);
      for (std::size_t t = 0; t < T; ++t) m(t, c) = v;
    }
  }
  return m;
}

NormStats fit_normalizer(const Dataset& train, const std::vector<std::string>& layout) {
  if (train.empty()) throw DataError("fit_normalizer: empty training split");
  NormStats st;
  st.feature_names = layout;
  std::vector<std::vector<double>> cols(layout.size());
  std::vector<double> ra, rh, yield;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto& s = train.samples[i];
    if (s.has_gaps()) {
      throw DataError("fit_normalizer: sample " + s.sample_id + " still has missing drivers");
    }
    const nd::Mat m = feature_matrix(s, layout);
    for (std::size_t t = 0; t < m.rows(); ++t)
      for (std::size_t c = 0; c < m.cols(); ++c) cols[c].push_back(m(t, c));
    const auto& tg = train.targets[i];
    for (std::size_t t = 0; t < tg.mask.size(); ++t) {
      if (!tg.mask[t]) continue;
      ra.push_back(tg.ra[t]);
      rh.push_back(tg.rh[t]);
    }
    if (tg.yield_observed) yield.push_back(tg.yield_target);
  }
  for (const auto& c : cols) st.features.push_back(moments(c));
  st.ra = moments(ra);
  st.rh = moments(rh);
  st.yield = moments(yield);
  return st;
}

nd::Mat apply_normalizer(const NormStats& stats, const nd::Mat& raw) {
  if (raw.cols() != stats.features.size()) {
    throw ShapeError("apply_normalizer: " + std::to_string(raw.cols()) + " columns, stats for " +
                     std::to_string(stats.features.size()));
  }
  nd::Mat z(raw.rows(), raw.cols());
  for (std::size_t t = 0; t < raw.rows(); ++t)
    for (std::size_t c = 0; c < raw.cols(); ++c) z(t, c) = stats.normalize_feature(c, raw(t, c));
  return z;
}

nd::Mat denormalize_features(const NormStats& stats, const nd::Mat& z) {
  if (z.cols() != stats.features.size()) {
    throw ShapeError("denormalize_features: " + std::to_string(z.cols()) +
                     " columns, stats for " + std::to_string(stats.features.size()));
  }
  nd::Mat raw(z.rows(), z.cols());
  for (std::size_t t = 0; t < z.rows(); ++t)
    for (std::size_t c = 0; c < z.cols(); ++c) raw(t, c) = stats.denormalize_feature(c, z(t, c));
  return raw;
}

kg::Example make_example(const NormStats& stats, const SampleSeries& s, const TargetSeries& t) {
  if (s.has_gaps()) throw DataError("sample " + s.sample_id + " has missing drivers");
  const std::size_t T = s.days.size();
  if (t.ra.size() != T || t.rh.size() != T || t.mask.size() != T) {
    throw ShapeError("sample " + s.sample_id + ": targets do not cover its days");
  }
  kg::Example ex;
  ex.inputs = apply_normalizer(stats, feature_matrix(s, stats.feature_names));
  ex.ra_z.assign(T, 0.0);
  ex.rh_z.assign(T, 0.0);
  ex.mask = t.mask;
  ex.gpp.resize(T);
  for (std::size_t d = 0; d < T; ++d) {
    ex.gpp[d] = s.days[d].gpp;
    if (!t.mask[d]) continue;
    ex.ra_z[d] = NormStats::normalize(stats.ra, t.ra[d]);
    ex.rh_z[d] = NormStats::normalize(stats.rh, t.rh[d]);
  }
  ex.yield_observed = t.yield_observed;
  ex.yield_z = t.yield_observed ? NormStats::normalize(stats.yield, t.yield_target) : 0.0;
  return ex;
}

std::vector<kg::Example> make_examples(const NormStats& stats, const Dataset& ds) {
  std::vector<kg::Example> out;
  out.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out.push_back(make_example(stats, ds.samples[i], ds.targets[i]));
  }
  return out;
}

}  // namespace sdsa::prep
