#include "sdsa/series.hpp"

#include <algorithm>

namespace sdsa {

bool SampleSeries::has_gaps() const noexcept {
  return std::any_of(days.begin(), days.end(), [](const DailyDrivers& d) {
    for (std::size_t k = 0; k < kDriverCount; ++k)
      if (is_missing(driver_at(d, k))) return true;
    return false;
  });
}

std::size_t TargetSeries::observed_days() const noexcept {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

Dataset Dataset::select(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.samples.reserve(indices.size());
  out.targets.reserve(indices.size());
  for (std::size_t i : indices) {
    out.samples.push_back(samples.at(i));
    out.targets.push_back(targets.at(i));
  }
  return out;
}

Dataset Dataset::concat(const std::vector<const Dataset*>& parts) {
  Dataset out;
  for (const Dataset* p : parts) {
    out.samples.insert(out.samples.end(), p->samples.begin(), p->samples.end());
    out.targets.insert(out.targets.end(), p->targets.begin(), p->targets.end());
  }
  return out;
}

}  // namespace sdsa
