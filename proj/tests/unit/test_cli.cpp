#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sdsa/dataset_io.hpp"
#include "sdsa_cli/commands.hpp"
#include "sdsa_cli/config.hpp"

using namespace sdsa;
using namespace sdsa::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kDefaultConfig = fs::path(SDSA_SOURCE_DIR) / "configs" / "default.json";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sdsa_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json default_json() { return json::parse(io::read_text(kDefaultConfig)); }

// Small enough for a full gen → train → eval → report in a few seconds.
ExperimentConfig tiny_experiment() {
  ExperimentConfig c = load_config(kDefaultConfig);
  c.generator.observed_samples_per_region = 8;
  c.generator.synthetic_samples_per_region = 8;
  c.generator.n_days = 20;
  c.model = {4, 1, 3};
  for (auto& s : c.protocol.steps) s.epochs = 2;
  c.protocol.batch_size = 4;
  return c;
}

fs::path write_config(const ExperimentConfig& c, const fs::path& dir) {
  const fs::path p = dir / "config.json";
  io::write_text_atomic(p, config_json(c));
  return p;
}

int run_cli(std::vector<std::string> args, std::string* err_text = nullptr) {
  args.insert(args.begin(), "sdsa");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (err_text) *err_text = err.str();
  return code;
}

}  // namespace

TEST(Config, DefaultFileParsesAndRoundTrips) {
  const ExperimentConfig c = load_config(kDefaultConfig);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.regions.regions.size(), 3u);
  EXPECT_EQ(c.generator.synthetic_samples_per_region, 100);
  EXPECT_EQ(c.generator.n_days, 365);
  EXPECT_EQ(c.model.hidden_dim, 64u);
  EXPECT_EQ(c.protocol.steps.size(), 5u);
  EXPECT_EQ(c.levels, (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(parse_config(config_json(c)), c);
  EXPECT_EQ(config_json(parse_config(config_json(c))), config_json(c));
}

TEST(Config, UnknownAndMissingKeysAreRejected) {
  json j = default_json();
  j["extra"] = 1;
  EXPECT_THROW(parse_config(j.dump()), ConfigError);
  j = default_json();
  j["model"].erase("hidden_dim");
  try {
    parse_config(j.dump());
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("hidden_dim"), std::string::npos);
  }
  j = default_json();
  j["seed"] = "42";
  EXPECT_THROW(parse_config(j.dump()), ConfigError);
  EXPECT_THROW(parse_config("{"), ConfigError);
}

TEST(Config, SemanticValidation) {
  json j = default_json();
  j["generator"]["observed_samples_per_region"] = 0;
  EXPECT_THROW(parse_config(j.dump()), ConfigError);
  j = default_json();
  j["levels"] = json::array({4});
  EXPECT_THROW(parse_config(j.dump()), ConfigError);
  j = default_json();
  j["observation"]["flux_day_fraction"] = 1.5;
  EXPECT_THROW(parse_config(j.dump()), ConfigError);
}

TEST(Config, HashIsStableAndIgnoresThreadCount) {
  ExperimentConfig c = load_config(kDefaultConfig);
  const std::string h = config_hash(c);
  EXPECT_EQ(h.size(), 16u);
  EXPECT_EQ(h.find_first_not_of("0123456789abcdef"), std::string::npos);
  c.protocol.threads = 4;
  EXPECT_EQ(config_hash(c), h);
  c.seed = 43;
  EXPECT_NE(config_hash(c), h);
  EXPECT_EQ(c.train_config().config_hash, config_hash(c));
}

TEST(Generate, DeterministicAndManifestRecordsPresets) {
  const ExperimentConfig c = tiny_experiment();
  const auto a = generate(c);
  const auto b = generate(c);
  EXPECT_EQ(a.synthetic, b.synthetic);
  EXPECT_EQ(io::daily_csv(a.observed), io::daily_csv(b.observed));
  EXPECT_EQ(a.synthetic.size(), 24u);
  EXPECT_EQ(a.synthetic_manifest.presets, c.generator.presets);
  EXPECT_EQ(a.observed_manifest.kind, "observed");
  EXPECT_EQ(a.observed_manifest.sample_regions.size(), 24u);
  EXPECT_NE(a.synthetic.samples[0], a.observed.samples[0]);
}

TEST(ThinObservations, FractionsAndGaps) {
  Dataset ds = generate(tiny_experiment()).synthetic;
  ObservationConfig obs;
  obs.flux_site_fraction = 1.0;
  obs.flux_day_fraction = 0.0;
  obs.yield_fraction = 0.0;
  obs.gap_probability = 1.0;
  obs.gap_length = 3;
  thin_observations(ds, obs, nd::RngStream(1));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(ds.targets[i].observed_days(), 0u);
    EXPECT_FALSE(ds.targets[i].yield_observed);
    EXPECT_EQ(ds.targets[i].yield_target, 0.0);
    std::size_t missing = 0;
    for (const auto& d : ds.samples[i].days)
      for (std::size_t k = 0; k < kDriverCount; ++k) missing += is_missing(driver_at(d, k));
    EXPECT_EQ(missing, 3u);
  }
}

TEST(ThinObservations, HalfOfDaysRoughly) {
  ExperimentConfig c = tiny_experiment();
  c.generator.n_days = 200;
  Dataset ds = generate(c).synthetic;
  ObservationConfig obs;
  obs.flux_day_fraction = 0.5;
  thin_observations(ds, obs, nd::RngStream(2));
  std::size_t seen = 0, total = 0;
  for (const auto& t : ds.targets) {
    seen += t.observed_days();
    total += t.mask.size();
    for (std::size_t d = 0; d < t.mask.size(); ++d)
      if (!t.mask[d]) EXPECT_EQ(t.ra[d], 0.0);
  }
  EXPECT_NEAR(static_cast<double>(seen) / static_cast<double>(total), 0.5, 0.03);
}

TEST(Report, RowsMatchMetricsExactly) {
  pipeline::EvalMatrix m;
  const char* sources[] = {"L1:pooled", "L2:pooled", "L3:illinois", "L3:iowa", "L3:indiana"};
  const char* regions[] = {"illinois", "iowa", "indiana"};
  double x = 0.1;
  for (const char* s : sources)
    for (const char* r : regions) {
      pipeline::EvalRecord rec{s, r, {}};
      rec.cell.ra.mse = x += 0.0137;
      rec.cell.rh.mse = x / 3.0;
      if (std::string(r) != "iowa") rec.cell.yield.mse = x * 7.0;
      m.records.push_back(rec);
    }
  const std::string text = metrics_json(m, regions::default_region_config(), "abc");
  const auto files = render_report(text);
  std::istringstream in(files.mse_csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "source,test_region,target,mse");
  const json j = json::parse(text);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    const auto& rec = j["records"][rows / 3];
    const char* target[] = {"mse_ra", "mse_rh", "mse_yield"};
    const auto& val = rec[target[rows % 3]];
    const std::string cell = line.substr(line.rfind(',') + 1);
    if (val.is_null())
      EXPECT_TRUE(cell.empty());
    else
      EXPECT_EQ(io::parse_double(cell, "mse"), val.get<double>());
    ++rows;
  }
  EXPECT_EQ(rows, 45u);
  EXPECT_NE(files.summary_md.find("| iowa | yield | n/a | n/a |"), std::string::npos);
}

TEST(Report, EmptyOrMalformedMetricsAreRejected) {
  EXPECT_THROW(render_report(""), FormatError);
  EXPECT_THROW(render_report("{\"records\": []}"), FormatError);
  EXPECT_THROW(render_report("{\"records\": [{\"source\": 1}]}"), FormatError);
  const fs::path dir = scratch("empty_report");
  io::write_text_atomic(dir / "metrics.json", "{\"format_version\": 1, \"records\": []}\n");
  std::ostringstream log;
  EXPECT_THROW(cmd_report(dir / "metrics.json", dir / "report", log), FormatError);
  EXPECT_FALSE(fs::exists(dir / "report"));
  fs::remove_all(dir);
}

TEST(Summary, FlagsAgreeWithRawCells) {
  pipeline::EvalMatrix m;
  auto add = [&](std::string s, std::string r, double ra, double rh) {
    pipeline::EvalRecord rec{std::move(s), std::move(r), {}};
    rec.cell.ra.mse = ra;
    rec.cell.rh.mse = rh;
    m.records.push_back(rec);
  };
  for (const char* r : {"illinois", "iowa", "indiana"}) {
    add("L1:pooled", r, 1.0, 1.0);
    add("L2:pooled", r, 0.8, 0.9);
  }
  add("L3:illinois", "illinois", 0.5, 0.5);
  add("L3:iowa", "iowa", 0.9, 0.5);  // loses to L2 on ra
  const auto s = summarize(m, regions::default_region_config());
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].beats_pooled_mse_ra, true);
  EXPECT_EQ(s[0].beats_pooled_mse_rh, true);
  EXPECT_EQ(s[1].beats_pooled_mse_ra, false);
  EXPECT_EQ(s[1].beats_pooled_mse_rh, true);
  EXPECT_FALSE(s[2].region_source.has_value());
  EXPECT_FALSE(s[2].beats_pooled_mse_rh.has_value());
}

TEST(Cli, EndToEndIsDeterministicAndRoundTrips) {
  const fs::path dir = scratch("e2e");
  const fs::path cfg = write_config(tiny_experiment(), dir);
  auto pipeline_run = [&](const fs::path& root) {
    ASSERT_EQ(run_cli({"gen", "--config", cfg.string(), "--out", (root / "data").string()}), 0);
    for (int level : {1, 2, 3})
      ASSERT_EQ(run_cli({"train", "--config", cfg.string(), "--data", (root / "data").string(),
                         "--level", std::to_string(level), "--out",
                         (root / ("b" + std::to_string(level))).string()}),
                0);
    ASSERT_EQ(run_cli({"eval", "--config", cfg.string(), "--data", (root / "data").string(),
                       "--bundle", (root / "b1").string(), "--bundle", (root / "b2").string(),
                       "--bundle", (root / "b3").string(), "--out",
                       (root / "metrics.json").string()}),
              0);
    ASSERT_EQ(run_cli({"report", "--metrics", (root / "metrics.json").string(), "--out",
                       (root / "report").string()}),
              0);
  };
  pipeline_run(dir / "a");
  pipeline_run(dir / "b");
  for (const char* f : {"data/synthetic/daily.csv", "data/observed/static.csv", "b3/history.json",
                        "b3/bundle.json", "metrics.json", "report/mse_by_source_and_region.csv",
                        "report/summary.md"})
    EXPECT_EQ(io::read_text(dir / "a" / f), io::read_text(dir / "b" / f)) << f;

  // Re-running into existing outputs rewrites identical bytes.
  pipeline_run(dir / "a");
  for (const char* f : {"data/observed/daily.csv", "b2/bundle.json", "metrics.json",
                        "report/summary.md"})
    EXPECT_EQ(io::read_text(dir / "a" / f), io::read_text(dir / "b" / f)) << f;

  const json metrics = json::parse(io::read_text(dir / "a" / "metrics.json"));
  EXPECT_EQ(metrics["records"].size(), 15u);

  const auto b1 = pipeline::load_bundle(dir / "a" / "b1");
  const auto b2 = pipeline::load_bundle(dir / "a" / "b2");
  EXPECT_EQ(b1.model.input_dim + 2, b2.model.input_dim);
  EXPECT_EQ(b1.config_hash, b2.config_hash);
  EXPECT_EQ(pipeline::load_bundle(dir / "a" / "b3").entries.size(), 3u);

  // Evaluating a single pooled bundle gives one record per region.
  ASSERT_EQ(run_cli({"eval", "--config", cfg.string(), "--data", (dir / "a" / "data").string(),
                     "--bundle", (dir / "a" / "b1").string(), "--out",
                     (dir / "one.json").string()}),
            0);
  EXPECT_EQ(json::parse(io::read_text(dir / "one.json"))["records"].size(), 3u);
  fs::remove_all(dir);
}

TEST(Cli, ErrorsExitNonZeroWithKind) {
  const fs::path dir = scratch("errors");
  std::string err;
  EXPECT_NE(run_cli({"train", "--config", "x.json", "--data", "d", "--level", "4", "--out", "o"},
                    &err),
            0);
  EXPECT_NE(run_cli({}), 0);
  EXPECT_EQ(run_cli({"gen", "--config", (dir / "absent.json").string(), "--out",
                     (dir / "out").string()},
                    &err),
            1);
  EXPECT_NE(err.find("not found"), std::string::npos);

  ExperimentConfig c = tiny_experiment();
  const fs::path cfg = write_config(c, dir);
  ASSERT_EQ(run_cli({"gen", "--config", cfg.string(), "--out", (dir / "data").string()}), 0);
  ASSERT_EQ(run_cli({"train", "--config", cfg.string(), "--data", (dir / "data").string(),
                     "--level", "1", "--out", (dir / "b1").string()}),
            0);
  c.seed = 7;
  const fs::path other = dir / "other";
  fs::create_directories(other);
  const fs::path cfg2 = write_config(c, other);
  EXPECT_EQ(run_cli({"eval", "--config", cfg2.string(), "--data", (dir / "data").string(),
                     "--bundle", (dir / "b1").string(), "--out", (dir / "m.json").string()},
                    &err),
            1);
  EXPECT_NE(err.find("configuration error"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "m.json"));
  fs::remove_all(dir);
}
