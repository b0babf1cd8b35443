#include "sdsa_cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include <nlohmann/json.hpp>

#include "sdsa/protocol.hpp"
#include "sdsa/synthgen.hpp"

namespace sdsa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// gen

void thin_observations(Dataset& ds, const ObservationConfig& obs, const nd::RngStream& rng) {
  for (std::size_t i = 0; i < ds.size(); ++i) {
    SampleSeries& s = ds.samples[i];
    TargetSeries& t = ds.targets[i];
    nd::RngStream r = nd::derive_stream(rng, "sample:" + std::to_string(i));
    const bool site = r.uniform() < obs.flux_site_fraction;
    for (std::size_t d = 0; d < t.mask.size(); ++d) {
      const bool seen = r.uniform() < obs.flux_day_fraction && site;
      t.mask[d] = seen ? 1 : 0;
      if (!seen) t.ra[d] = t.rh[d] = 0.0;
    }
    t.yield_observed = r.uniform() < obs.yield_fraction;
    if (!t.yield_observed) t.yield_target = 0.0;

    const bool gap = r.uniform() < obs.gap_probability;
    const auto len = static_cast<std::size_t>(obs.gap_length);
    if (gap && s.days.size() > len) {
      const std::size_t k = r.next_u64() % kDriverCount;
      const std::size_t start = r.next_u64() % (s.days.size() - len + 1);
      for (std::size_t d = start; d < start + len; ++d) driver_at(s.days[d], k) = missing_value();
    }
  }
}

GeneratedData generate(const ExperimentConfig& cfg) {
  cfg.validate();
  const nd::RngStream root(cfg.seed);
  GeneratedData out;
  std::vector<Dataset> syn_parts, obs_parts;
  for (const auto& id : cfg.regions.ids()) {
    const synth::RegionProcessParams& p = cfg.generator.presets.at(id);
    synth::GenerationOptions opt;
    opt.n_days = cfg.generator.n_days;
    opt.drivers = cfg.generator.drivers;

    opt.n_samples = cfg.generator.synthetic_samples_per_region;
    syn_parts.push_back(synth::generate_region_dataset(
        cfg.regions, id, p, opt, nd::derive_stream(root, "synthetic:" + id.name())));

    opt.n_samples = cfg.generator.observed_samples_per_region;
    Dataset obs = synth::generate_region_dataset(cfg.regions, id, p, opt,
                                                 nd::derive_stream(root, "observed:" + id.name()));
    thin_observations(obs, cfg.observation, nd::derive_stream(root, "observation:" + id.name()));
    obs_parts.push_back(std::move(obs));

    for (const auto& s : syn_parts.back().samples) out.synthetic_manifest.sample_regions.emplace(s.sample_id, id);
    for (const auto& s : obs_parts.back().samples) out.observed_manifest.sample_regions.emplace(s.sample_id, id);
  }
  std::vector<const Dataset*> sp, op;
  for (const auto& d : syn_parts) sp.push_back(&d);
  for (const auto& d : obs_parts) op.push_back(&d);
  out.synthetic = Dataset::concat(sp);
  out.observed = Dataset::concat(op);

  for (auto* m : {&out.synthetic_manifest, &out.observed_manifest}) {
    m->seed = cfg.seed;
    m->n_days = cfg.generator.n_days;
    for (const auto& id : cfg.regions.ids()) m->presets.emplace(id, cfg.generator.presets.at(id));
  }
  out.synthetic_manifest.kind = "synthetic";
  out.observed_manifest.kind = "observed";
  return out;
}

void cmd_gen(const fs::path& config, const fs::path& out, std::optional<std::uint64_t> seed,
             std::ostream& log) {
  ExperimentConfig cfg = load_config(config);
  if (seed) cfg.seed = *seed;
  const GeneratedData data = generate(cfg);
  io::write_dataset_dir(out / "synthetic", data.synthetic, data.synthetic_manifest);
  io::write_dataset_dir(out / "observed", data.observed, data.observed_manifest);
  log << "wrote " << data.synthetic.size() << " synthetic and " << data.observed.size()
      << " observed samples to " << out.string() << "\n";
}

// ---------------------------------------------------------------------------
// train

void cmd_train(const fs::path& config, const fs::path& data, int level, const fs::path& out,
               std::ostream& log) {
  const ExperimentConfig cfg = load_config(config);
  const model::AwarenessLevel lvl = model::level_from_int(level);
  const auto syn = io::read_dataset_dir(data / "synthetic");
  const auto obs = io::read_dataset_dir(data / "observed");

  pipeline::TrainConfig tc = cfg.train_config();
  const auto started = std::chrono::steady_clock::now();
  tc.on_epoch = [&](const pipeline::EpochRecord& r) {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    char guard[32] = "";
    if (r.val_guard) std::snprintf(guard, sizeof guard, "  guard %.5f", *r.val_guard);
    char line[224];
    std::snprintf(line, sizeof line, "[%7.1fs] %-9s step %d %-22s epoch %3d  loss %.5f  val %.5f%s%s\n",
                  secs, r.stage.c_str(), r.step, r.step_name.c_str(), r.epoch, r.train.total,
                  r.val_mse, guard, r.improved ? " *" : "");
    log << line << std::flush;
  };
  const pipeline::TrainedBundle bundle = pipeline::train_five_step(tc, syn.data, obs.data, lvl);
  pipeline::save_bundle(bundle, out);
  log << "level " << level << " bundle with " << bundle.entries.size() << " entr"
      << (bundle.entries.size() == 1 ? "y" : "ies") << " written to " << out.string() << "\n";
}

// ---------------------------------------------------------------------------
// eval

namespace {

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json opt_json(const std::optional<bool>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::vector<RegionSummary> summarize(const pipeline::EvalMatrix& m,
                                     const regions::RegionConfig& rc) {
  std::vector<RegionSummary> out;
  const auto sources = m.sources();
  for (const auto& id : rc.ids()) {
    RegionSummary s;
    s.region = id.name();
    const std::string own = pipeline::source_name(model::AwarenessLevel::level3, id.name());
    for (const auto& src : sources) {
      if (src == own) s.region_source = src;
      if (src.ends_with(std::string(":") + pipeline::kPooledTag)) s.pooled_sources.push_back(src);
    }
    if (s.region_source && !s.pooled_sources.empty()) {
      const auto& mine = m.at(*s.region_source, s.region).cell;
      bool rh = mine.rh.mse.has_value(), ra = mine.ra.mse.has_value();
      for (const auto& p : s.pooled_sources) {
        const auto& other = m.at(p, s.region).cell;
        rh = rh && other.rh.mse && *mine.rh.mse < *other.rh.mse;
        ra = ra && other.ra.mse && *mine.ra.mse < *other.ra.mse;
      }
      s.beats_pooled_mse_rh = rh;
      s.beats_pooled_mse_ra = ra;
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string metrics_json(const pipeline::EvalMatrix& m, const regions::RegionConfig& rc,
                         const std::string& config_hash) {
  json records = json::array();
  for (const auto& r : m.records) {
    const auto& c = r.cell;
    records.push_back({{"source", r.source},
                       {"test_region", r.test_region},
                       {"mse_ra", opt_json(c.ra.mse)},
                       {"mse_rh", opt_json(c.rh.mse)},
                       {"mse_yield", opt_json(c.yield.mse)},
                       {"r2_ra", opt_json(c.ra.r2)},
                       {"r2_rh", opt_json(c.rh.r2)},
                       {"r2_yield", opt_json(c.yield.r2)},
                       {"pearson_ra", opt_json(c.ra.pearson)},
                       {"pearson_rh", opt_json(c.rh.pearson)},
                       {"n_samples", c.n_samples},
                       {"n_flux_days", c.ra.n},
                       {"n_yield", c.yield.n}});
  }
  json summary = json::array();
  for (const auto& s : summarize(m, rc)) {
    summary.push_back({{"region", s.region},
                       {"region_source", s.region_source ? json(*s.region_source) : json(nullptr)},
                       {"pooled_sources", s.pooled_sources},
                       {"beats_pooled_mse_rh", opt_json(s.beats_pooled_mse_rh)},
                       {"beats_pooled_mse_ra", opt_json(s.beats_pooled_mse_ra)}});
  }
  const json j = {{"format_version", 1},
                  {"config_hash", config_hash},
                  {"records", records},
                  {"summary", summary}};
  return j.dump(2) + "\n";
}

void cmd_eval(const fs::path& config, const fs::path& data, const std::vector<fs::path>& bundles,
              const fs::path& out, std::ostream& log) {
  if (bundles.empty()) throw UsageError("eval: at least one --bundle is required");
  const ExperimentConfig cfg = load_config(config);
  const pipeline::TrainConfig tc = cfg.train_config();
  std::vector<pipeline::TrainedBundle> loaded;
  for (const auto& b : bundles) {
    loaded.push_back(pipeline::load_bundle(b));
    if (loaded.back().config_hash != tc.config_hash) {
      throw ConfigError("bundle " + b.string() + " was trained with config " +
                        loaded.back().config_hash + ", current config is " + tc.config_hash);
    }
  }
  const auto obs = io::read_dataset_dir(data / "observed");
  const auto tests = pipeline::test_sets(tc, obs.data);
  std::vector<const pipeline::TrainedBundle*> ptrs;
  for (const auto& b : loaded) ptrs.push_back(&b);
  const pipeline::EvalMatrix m = pipeline::cross_region_matrix(ptrs, tests, cfg.regions);
  const std::string text = metrics_json(m, cfg.regions, tc.config_hash);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  io::write_text_atomic(out, text);
  log << m.records.size() << " evaluation records written to " << out.string() << "\n";
}

// ---------------------------------------------------------------------------
// report

namespace {

std::string num_or_empty(const json& v) {
  return v.is_null() ? std::string() : io::format_double(v.get<double>());
}

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

ReportFiles render_report(std::string_view metrics_text) {
  json j;
  try {
    j = json::parse(metrics_text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("metrics file is not valid JSON: ") + e.what());
  }
  ReportFiles out;
  try {
    const json& records = j.at("records");
    if (!records.is_array() || records.empty()) throw FormatError("metrics file has no records");
    std::string csv = "source,test_region,target,mse\n";
    std::vector<std::string> regions_seen;
    for (const auto& r : records) {
      const auto source = r.at("source").get<std::string>();
      const auto region = r.at("test_region").get<std::string>();
      if (std::find(regions_seen.begin(), regions_seen.end(), region) == regions_seen.end()) {
        regions_seen.push_back(region);
      }
      for (const char* target : {"ra", "rh", "yield"}) {
        csv += source + "," + region + "," + target + "," +
               num_or_empty(r.at(std::string("mse_") + target)) + "\n";
      }
    }
    out.mse_csv = std::move(csv);

    std::string md = "# Cross-region test MSE\n\n";
    md += "Lowest test MSE per region and target (physical units).\n\n";
    md += "| test region | target | winner | mse |\n|---|---|---|---|\n";
    for (const auto& region : regions_seen) {
      for (const char* target : {"ra", "rh", "yield"}) {
        const std::string key = std::string("mse_") + target;
        const json* best = nullptr;
        for (const auto& r : records) {
          if (r.at("test_region").get<std::string>() != region || r.at(key).is_null()) continue;
          if (!best || r.at(key).get<double>() < best->at(key).get<double>()) best = &r;
        }
        md += "| " + region + " | " + target + " | " +
              (best ? best->at("source").get<std::string>() + " | " + fixed(best->at(key).get<double>())
                    : std::string("n/a | n/a")) +
              " |\n";
      }
    }
    if (j.contains("summary")) {
      md += "\nRegion-specific model against every pooled model on its own region:\n\n";
      md += "| region | model | beats pooled on mse_rh | beats pooled on mse_ra |\n|---|---|---|---|\n";
      auto flag = [](const json& v) {
        return v.is_null() ? std::string("n/a") : v.get<bool>() ? std::string("yes") : std::string("no");
      };
      for (const auto& s : j.at("summary")) {
        const json& src = s.at("region_source");
        md += "| " + s.at("region").get<std::string>() + " | " +
              (src.is_null() ? std::string("n/a") : src.get<std::string>()) + " | " +
              flag(s.at("beats_pooled_mse_rh")) + " | " + flag(s.at("beats_pooled_mse_ra")) + " |\n";
      }
    }
    out.summary_md = std::move(md);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed metrics file: ") + e.what());
  }
  return out;
}

void cmd_report(const fs::path& metrics, const fs::path& out, std::ostream& log) {
  const ReportFiles files = render_report(io::read_text(metrics));
  fs::create_directories(out);
  io::write_text_atomic(out / "mse_by_source_and_region.csv", files.mse_csv);
  io::write_text_atomic(out / "summary.md", files.summary_md);
  log << "report written to " << out.string() << "\n";
}

}  // namespace sdsa::cli
