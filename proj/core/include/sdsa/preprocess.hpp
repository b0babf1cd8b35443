#pragma once

#include <string>
#include <vector>

#include "sdsa/kgloss.hpp"
#include "sdsa/model.hpp"
#include "sdsa/series.hpp"

namespace sdsa::prep {

/// Fills interior runs of missing driver values (≤ max_gap days) linearly
/// between the nearest observed neighbours; runs touching either end are
/// extended from the nearest observed value under the same length limit.
/// Throws DataError naming the feature and day range otherwise.
SampleSeries interpolate_gaps(const SampleSeries& series, int max_gap);

Dataset interpolate_gaps(const Dataset& ds, int max_gap);

inline constexpr double kStdFloor = 1e-8;

struct Moments {
  double mean = 0.0;
  double std = 1.0;

  bool operator==(const Moments&) const = default;
};

/// Z-score statistics for every input column of a feature layout and for the
/// three targets. Population moments; std floored at kStdFloor.
struct NormStats {
  std::vector<std::string> feature_names;
  std::vector<Moments> features;
  Moments ra, rh, yield;

  double normalize_feature(std::size_t k, double v) const noexcept {
    return (v - features[k].mean) / features[k].std;
  }
  double denormalize_feature(std::size_t k, double z) const noexcept {
    return z * features[k].std + features[k].mean;
  }
  static double normalize(const Moments& m, double v) noexcept { return (v - m.mean) / m.std; }
  static double denormalize(const Moments& m, double z) noexcept { return z * m.std + m.mean; }

  std::size_t feature_index(const std::string& name) const;

  kg::TargetScale target_scale() const noexcept {
    return {ra.mean, ra.std, rh.mean, rh.std, yield.mean, yield.std};
  }

  bool operator==(const NormStats&) const = default;
};

/// Raw (unnormalized) T × F feature matrix in the given layout.
nd::Mat feature_matrix(const SampleSeries& s, const std::vector<std::string>& layout);

/// Fits on the given (training) data only. Features pool every (sample, day)
/// row; flux targets pool observed days; yield pools observed yields.
/// Throws DataError on an empty split or remaining missing values.
NormStats fit_normalizer(const Dataset& train, const std::vector<std::string>& layout);

nd::Mat apply_normalizer(const NormStats& stats, const nd::Mat& raw);
nd::Mat denormalize_features(const NormStats& stats, const nd::Mat& z);

/// Normalized training example for one sample.
kg::Example make_example(const NormStats& stats, const SampleSeries& s, const TargetSeries& t);
std::vector<kg::Example> make_examples(const NormStats& stats, const Dataset& ds);

}  // namespace sdsa::prep
