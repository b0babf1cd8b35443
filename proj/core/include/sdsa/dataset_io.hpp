#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "sdsa/series.hpp"
#include "sdsa/synthgen.hpp"

namespace sdsa::io {

inline constexpr int kDatasetSchemaVersion = 1;

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
/// Strict decimal parse of the whole field. Throws DataError.
double parse_double(std::string_view field, std::string_view what);

/// Writes to a sibling temporary file and renames it over `path`.
void write_text_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_text(const std::filesystem::path& path);

std::string static_csv(const Dataset& ds);
std::string daily_csv(const Dataset& ds);

/// Parses the two CSV documents. Samples keep static.csv row order; daily rows
/// may appear in any order and are sorted by day_index. Empty driver cells
/// load as missing_value().
Dataset parse_dataset(std::string_view static_text, std::string_view daily_text);

Dataset load_dataset(const std::filesystem::path& static_path,
                     const std::filesystem::path& daily_path);

struct DatasetManifest {
  int schema_version = kDatasetSchemaVersion;
  std::string kind;  // "synthetic" or "observed"
  std::uint64_t seed = 0;
  int n_days = 0;
  std::map<RegionId, synth::RegionProcessParams> presets;
  std::map<std::string, RegionId> sample_regions;

  bool operator==(const DatasetManifest&) const = default;
};

std::string manifest_json(const DatasetManifest& m);
DatasetManifest parse_manifest(std::string_view text);

/// static.csv, daily.csv and manifest.json inside `dir` (created if needed).
void write_dataset_dir(const std::filesystem::path& dir, const Dataset& ds,
                       const DatasetManifest& manifest);

struct LoadedDataset {
  Dataset data;
  DatasetManifest manifest;
};

LoadedDataset read_dataset_dir(const std::filesystem::path& dir);

}  // namespace sdsa::io
