#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "sdsa/regions.hpp"
#include "sdsa/synthgen.hpp"

using namespace sdsa;
using regions::RegionConfig;

namespace {

SampleSeries at(double lat, double lon, std::string id = "s") {
  SampleSeries s;
  s.sample_id = std::move(id);
  s.lat = lat;
  s.lon = lon;
  return s;
}

}  // namespace

TEST(DetectRegion, PointInsideSingleBox) {
  EXPECT_EQ(regions::detect_region(41.6, -93.6, regions::default_region_config()),
            RegionId("iowa"));
  EXPECT_EQ(regions::detect_region(40.0, -86.0, regions::default_region_config()),
            RegionId("indiana"));
}

TEST(DetectRegion, OutsideRejected) {
  const auto cfg = regions::default_region_config();
  try {
    regions::detect_region(25.0, -90.0, cfg);
    FAIL() << "expected ClassificationError";
  } catch (const ClassificationError& e) {
    EXPECT_EQ(e.lat(), 25.0);
    EXPECT_EQ(e.kind(), ErrorKind::classification);
  }
}

TEST(DetectRegion, OutsideNearestPolicy) {
  auto cfg = regions::default_region_config();
  cfg.out_of_region_policy = regions::OutOfRegionPolicy::nearest;
  EXPECT_EQ(regions::detect_region(45.0, -99.0, cfg), RegionId("iowa"));
}

TEST(DetectRegion, OverlapResolvesToNearestCentroid) {
  const auto cfg = regions::default_region_config();
  // Inside both the illinois and iowa boxes.
  const double lat = 41.0, lon = -90.5;
  const auto& il = cfg.find(RegionId("illinois")).box;
  const auto& ia = cfg.find(RegionId("iowa")).box;
  ASSERT_TRUE(il.contains(lat, lon) && ia.contains(lat, lon));
  const double d_il = std::hypot(lat - (36.9 + 42.6) / 2, lon - (-91.6 - 87.4) / 2);
  const double d_ia = std::hypot(lat - (40.3 + 43.6) / 2, lon - (-96.7 - 90.1) / 2);
  const RegionId expected(d_il < d_ia ? "illinois" : "iowa");
  EXPECT_EQ(regions::detect_region(lat, lon, cfg), expected);
}

TEST(DetectRegion, InvalidCoordinateIsDomainError) {
  EXPECT_THROW(regions::detect_region(91.0, 0.0, regions::default_region_config()), DomainError);
  EXPECT_THROW(regions::detect_region(NAN, 0.0, regions::default_region_config()), DomainError);
}

TEST(RegionConfig, ValidateRejectsBadConfigs) {
  RegionConfig empty;
  EXPECT_THROW(empty.validate(), ConfigError);
  auto dup = regions::default_region_config();
  dup.regions.push_back(dup.regions.front());
  EXPECT_THROW(dup.validate(), ConfigError);
  auto inverted = regions::default_region_config();
  std::swap(inverted.regions[0].box.lat_min, inverted.regions[0].box.lat_max);
  EXPECT_THROW(inverted.validate(), ConfigError);
  EXPECT_NO_THROW(regions::default_region_config().validate());
  EXPECT_THROW(regions::default_region_config().find(RegionId("ohio")), ConfigError);
}

TEST(Partition, EmptyAndSingleton) {
  const auto cfg = regions::default_region_config();
  EXPECT_TRUE(regions::partition({}, cfg).empty());
  auto p = regions::partition({at(41.6, -93.6)}, cfg);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p.at(RegionId("iowa")), std::vector<std::size_t>{0});
}

TEST(Partition, ErrorNamesSample) {
  try {
    regions::partition({at(41.6, -93.6), at(25.0, -90.0, "gulf-1")},
                       regions::default_region_config());
    FAIL();
  } catch (const ClassificationError& e) {
    EXPECT_NE(std::string(e.what()).find("gulf-1"), std::string::npos);
  }
}

TEST(Partition, GeneratedSamplesLandInTheirRegion) {
  // Disjoint boxes, so detection cannot be confused by overlaps.
  RegionConfig cfg;
  cfg.regions = {{RegionId("a"), {30, 32, -100, -98}}, {RegionId("b"), {40, 42, -90, -88}}};
  synth::GenerationOptions opt;
  opt.n_samples = 20;
  opt.n_days = 5;
  nd::RngStream rng(42);
  for (const auto& entry : cfg.regions) {
    const Dataset ds = synth::generate_region_dataset(
        cfg, entry.id, synth::RegionProcessParams{}, opt, nd::derive_stream(rng, entry.id.name()));
    auto p = regions::partition(ds.samples, cfg);
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p.begin()->first, entry.id);
    EXPECT_EQ(p.begin()->second.size(), 20u);
  }
}

TEST(ShiftReport, IdenticalRegionsHaveZeroSmd) {
  std::vector<SampleSeries> samples;
  for (int i = 0; i < 4; ++i) {
    SampleSeries s = at(0, 0, std::to_string(i));
    for (int t = 0; t < 3; ++t) {
      DailyDrivers d;
      d.t_air_c = t + i % 2;
      d.moisture_frac = 0.1 * t;
      s.days.push_back(d);
    }
    samples.push_back(s);
  }
  regions::Partition part{{RegionId("a"), {0, 1}}, {RegionId("b"), {2, 3}}};
  auto rep = regions::shift_report(samples, part);
  for (auto name : kDriverNames) {
    const auto smd = rep.smd(RegionId("a"), RegionId("b"), std::string(name));
    ASSERT_TRUE(smd.has_value()) << name;
    EXPECT_EQ(*smd, 0.0) << name;
  }
}

TEST(ShiftReport, HandComputedSmdAndSymmetry) {
  auto series = [](std::string id, std::vector<double> temps) {
    SampleSeries s = at(0, 0, std::move(id));
    for (double t : temps) {
      DailyDrivers d;
      d.t_air_c = t;
      s.days.push_back(d);
    }
    return s;
  };
  std::vector<SampleSeries> samples{series("a0", {0, 2}), series("a1", {4}),
                                    series("b0", {10, 12}), series("b1", {14, 16})};
  regions::Partition part{{RegionId("a"), {0, 1}}, {RegionId("b"), {2, 3}}};
  auto rep = regions::shift_report(samples, part);
  // a: values 0,2,4 mean 2, sample var 4; b: 10..16 mean 13, sample var 20/3
  const double expected = 11.0 / std::sqrt((4.0 + 20.0 / 3.0) / 2.0);
  EXPECT_NEAR(*rep.smd(RegionId("a"), RegionId("b"), "t_air_c"), expected, 1e-12);
  EXPECT_EQ(rep.smd(RegionId("a"), RegionId("b"), "t_air_c"),
            rep.smd(RegionId("b"), RegionId("a"), "t_air_c"));
  EXPECT_EQ(rep.stats(RegionId("a"), "t_air_c").n_values, 3u);
  EXPECT_NEAR(*rep.stats(RegionId("b"), "t_air_c").std, std::sqrt(20.0 / 3.0), 1e-12);
  EXPECT_EQ(rep.max_smd("t_air_c"), rep.smd(RegionId("a"), RegionId("b"), "t_air_c"));
}

TEST(ShiftReport, MissingDaysAreSkipped) {
  auto series = [](std::string id, std::vector<double> temps) {
    SampleSeries s = at(0, 0, std::move(id));
    for (double t : temps) {
      DailyDrivers d;
      d.t_air_c = t;
      s.days.push_back(d);
    }
    return s;
  };
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<SampleSeries> gappy{series("a0", {0, nan, 2}), series("a1", {nan, 4}),
                                  series("b0", {10, 12, nan}), series("b1", {14, 16})};
  std::vector<SampleSeries> clean{series("a0", {0, 2}), series("a1", {4}),
                                  series("b0", {10, 12}), series("b1", {14, 16})};
  regions::Partition part{{RegionId("a"), {0, 1}}, {RegionId("b"), {2, 3}}};
  const auto g = regions::shift_report(gappy, part);
  const auto c = regions::shift_report(clean, part);
  EXPECT_EQ(g.stats(RegionId("a"), "t_air_c").n_values, 3u);
  EXPECT_EQ(g.smd(RegionId("a"), RegionId("b"), "t_air_c"),
            c.smd(RegionId("a"), RegionId("b"), "t_air_c"));
}

TEST(ShiftReport, SingleSampleBucketHasNoStd) {
  SampleSeries s = at(0, 0);
  s.days.resize(3);
  std::vector<SampleSeries> samples{s, s, s};
  regions::Partition part{{RegionId("a"), {0}}, {RegionId("b"), {1, 2}}};
  auto rep = regions::shift_report(samples, part);
  EXPECT_FALSE(rep.stats(RegionId("a"), "gpp").std.has_value());
  EXPECT_FALSE(rep.smd(RegionId("a"), RegionId("b"), "gpp").has_value());
  EXPECT_THROW(rep.stats(RegionId("c"), "gpp"), NotFoundError);
}

TEST(ShiftReport, DefaultPresetsSeparateIowaAndIndianaMoisture) {
  const auto cfg = regions::default_region_config();
  const auto presets = synth::default_presets();
  nd::RngStream rng(42);
  std::vector<SampleSeries> samples;
  regions::Partition part;
  for (const char* name : {"iowa", "indiana"}) {
    const RegionId id(name);
    synth::GenerationOptions opt;
    const Dataset ds = synth::generate_region_dataset(cfg, id, presets.at(id), opt,
                                                      nd::derive_stream(rng, name));
    for (const auto& s : ds.samples) {
      part[id].push_back(samples.size());
      samples.push_back(s);
    }
  }
  auto rep = regions::shift_report(samples, part);
  EXPECT_GT(*rep.smd(RegionId("iowa"), RegionId("indiana"), "moisture_frac"), 0.5);
}

namespace {

std::vector<SampleSeries> scattered_sites(std::size_t n, std::uint64_t seed) {
  // Points across the union of the default boxes, overlaps included.
  nd::RngStream rng(seed);
  std::vector<SampleSeries> out;
  while (out.size() < n) {
    const double lat = rng.uniform(37.8, 42.5), lon = rng.uniform(-96.6, -84.8);
    const auto s = at(lat, lon, "p" + std::to_string(out.size()));
    bool inside = false;
    for (const auto& r : regions::default_region_config().regions)
      inside = inside || r.box.contains(lat, lon);
    if (inside) out.push_back(s);
  }
  return out;
}

}  // namespace

TEST(Partition, AgreesWithDetectRegion) {
  const auto cfg = regions::default_region_config();
  const auto samples = scattered_sites(300, 1);
  const auto part = regions::partition(samples, cfg);
  std::size_t total = 0;
  for (const auto& [id, idx] : part) {
    total += idx.size();
    EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
    for (std::size_t i : idx) EXPECT_EQ(regions::detect_region(samples[i].lat, samples[i].lon, cfg), id);
  }
  EXPECT_EQ(total, samples.size());
}

TEST(Partition, PermutingSamplesPermutesBuckets) {
  const auto cfg = regions::default_region_config();
  const auto samples = scattered_sites(120, 2);
  std::vector<std::size_t> perm(samples.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  nd::RngStream rng(3);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.next_u64() % i]);
  std::vector<SampleSeries> shuffled;
  for (std::size_t i : perm) shuffled.push_back(samples[i]);

  const auto a = regions::partition(samples, cfg);
  const auto b = regions::partition(shuffled, cfg);
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [id, idx] : a) {
    std::set<std::string> ids_a, ids_b;
    for (std::size_t i : idx) ids_a.insert(samples[i].sample_id);
    for (std::size_t i : b.at(id)) ids_b.insert(shuffled[i].sample_id);
    EXPECT_EQ(ids_a, ids_b) << id.name();
  }
  EXPECT_EQ(regions::partition(samples, cfg), a);
}

TEST(ShiftReport, SmdInvariantUnderCommonAffineRescaling) {
  auto cfg = regions::default_region_config();
  synth::GenerationOptions opt;
  opt.n_samples = 6;
  opt.n_days = 40;
  std::vector<SampleSeries> samples;
  for (const auto& [id, p] : synth::default_presets()) {
    auto ds = synth::generate_region_dataset(cfg, id, p, opt, nd::RngStream(4));
    samples.insert(samples.end(), ds.samples.begin(), ds.samples.end());
  }
  regions::Partition part;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string& id = samples[i].sample_id;  // "<region>-NNNN"
    part[RegionId(id.substr(0, id.find('-')))].push_back(i);
  }
  const auto before = regions::shift_report(samples, part);
  for (auto& s : samples)
    for (auto& d : s.days) d.moisture_frac = 3.5 * d.moisture_frac - 0.7;
  const auto after = regions::shift_report(samples, part);
  const auto ids = cfg.ids();
  for (std::size_t a = 0; a < ids.size(); ++a)
    for (std::size_t b = a + 1; b < ids.size(); ++b) {
      const auto x = before.smd(ids[a], ids[b], "moisture_frac");
      const auto y = after.smd(ids[a], ids[b], "moisture_frac");
      ASSERT_TRUE(x && y);
      EXPECT_NEAR(*x, *y, 1e-9 * std::max(1.0, std::abs(*x)));
    }
}
