#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sdsa/dataset_io.hpp"
#include "sdsa/evaluate.hpp"
#include "sdsa_cli/config.hpp"

namespace sdsa::cli {

struct GeneratedData {
  Dataset synthetic;
  Dataset observed;
  io::DatasetManifest synthetic_manifest;
  io::DatasetManifest observed_manifest;
};

/// Synthetic pretraining data (fully observed) and the "observed" data
/// (independent draws, thinned per the observation config).
GeneratedData generate(const ExperimentConfig& cfg);

/// Applies the observation config to a fully observed dataset in place.
void thin_observations(Dataset& ds, const ObservationConfig& obs, const nd::RngStream& rng);

struct RegionSummary {
  std::string region;
  std::optional<std::string> region_source;
  std::vector<std::string> pooled_sources;
  std::optional<bool> beats_pooled_mse_rh;
  std::optional<bool> beats_pooled_mse_ra;
};

std::vector<RegionSummary> summarize(const pipeline::EvalMatrix& m,
                                     const regions::RegionConfig& rc);

std::string metrics_json(const pipeline::EvalMatrix& m, const regions::RegionConfig& rc,
                         const std::string& config_hash);

struct ReportFiles {
  std::string mse_csv;
  std::string summary_md;
};

/// Renders the plot-ready report from metrics.json text. Throws FormatError on
/// malformed or empty metrics.
ReportFiles render_report(std::string_view metrics_text);

void cmd_gen(const std::filesystem::path& config, const std::filesystem::path& out,
             std::optional<std::uint64_t> seed, std::ostream& log);
void cmd_train(const std::filesystem::path& config, const std::filesystem::path& data, int level,
               const std::filesystem::path& out, std::ostream& log);
void cmd_eval(const std::filesystem::path& config, const std::filesystem::path& data,
              const std::vector<std::filesystem::path>& bundles,
              const std::filesystem::path& out, std::ostream& log);
void cmd_report(const std::filesystem::path& metrics, const std::filesystem::path& out,
                std::ostream& log);

/// Entry point shared by the executable and tests; returns the exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sdsa::cli
