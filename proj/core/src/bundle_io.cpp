#include <system_error>

#include <nlohmann/json.hpp>

#include "sdsa/dataset_io.hpp"
#include "sdsa/evaluate.hpp"

namespace sdsa::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json moments_json(const prep::Moments& m) { return {{"mean", m.mean}, {"std", m.std}}; }

prep::Moments moments_from(const json& j) {
  return {j.at("mean").get<double>(), j.at("std").get<double>()};
}

json norm_json(const prep::NormStats& n) {
  json features = json::array();
  for (std::size_t k = 0; k < n.features.size(); ++k) {
    features.push_back({{"name", n.feature_names[k]},
                        {"mean", n.features[k].mean},
                        {"std", n.features[k].std}});
  }
  return {{"features", features},
          {"ra", moments_json(n.ra)},
          {"rh", moments_json(n.rh)},
          {"yield", moments_json(n.yield)}};
}

prep::NormStats norm_from(const json& j) {
  prep::NormStats n;
  for (const auto& f : j.at("features")) {
    n.feature_names.push_back(f.at("name").get<std::string>());
    n.features.push_back({f.at("mean").get<double>(), f.at("std").get<double>()});
  }
  n.ra = moments_from(j.at("ra"));
  n.rh = moments_from(j.at("rh"));
  n.yield = moments_from(j.at("yield"));
  return n;
}

json breakdown_json(const kg::LossBreakdown& b) {
  return {{"total", b.total},           {"mse_flux", b.mse_flux},
          {"mse_yield", b.mse_yield},   {"pen_nonneg", b.pen_nonneg},
          {"pen_budget", b.pen_budget}, {"pen_response", b.pen_response},
          {"reg_l2", b.reg_l2},         {"n_observed_flux_days", b.n_observed_flux_days}};
}

kg::LossBreakdown breakdown_from(const json& j) {
  kg::LossBreakdown b;
  b.total = j.at("total").get<double>();
  b.mse_flux = j.at("mse_flux").get<double>();
  b.mse_yield = j.at("mse_yield").get<double>();
  b.pen_nonneg = j.at("pen_nonneg").get<double>();
  b.pen_budget = j.at("pen_budget").get<double>();
  b.pen_response = j.at("pen_response").get<double>();
  b.reg_l2 = j.at("reg_l2").get<double>();
  b.n_observed_flux_days = j.at("n_observed_flux_days").get<std::size_t>();
  return b;
}

json params_json(const BundleEntry& e) {
  json blocks = json::array();
  for (const auto& b : e.params.blocks()) {
    blocks.push_back({{"name", b.name},
                      {"rows", b.rows},
                      {"cols", b.cols},
                      {"values", std::vector<double>(b.values.begin(), b.values.end())}});
  }
  return {{"format_version", kBundleFormatVersion}, {"tag", e.tag}, {"blocks", blocks}};
}

void check_version(const json& j, const std::string& file) {
  const int v = j.at("format_version").get<int>();
  if (v != kBundleFormatVersion) {
    throw FormatError(file + ": format_version " + std::to_string(v) + ", expected " +
                      std::to_string(kBundleFormatVersion));
  }
}

json parse_file(const fs::path& path) {
  const std::string text = io::read_text(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string params_file(std::size_t k) { return "params/entry" + std::to_string(k) + ".json"; }

}  // namespace

void save_bundle(const TrainedBundle& bundle, const fs::path& dir) {
  json meta;
  meta["format_version"] = bundle.format_version;
  meta["awareness_level"] = model::to_int(bundle.model.level);
  meta["model"] = {{"input_dim", bundle.model.input_dim},
                   {"hidden_dim", bundle.model.hidden_dim},
                   {"n_layers", bundle.model.n_layers},
                   {"att_dim", bundle.model.att_dim}};
  meta["feature_layout"] = bundle.feature_layout;
  meta["config_hash"] = bundle.config_hash;
  meta["seed"] = bundle.seed;
  json entries = json::array();
  for (std::size_t k = 0; k < bundle.entries.size(); ++k) {
    const auto& e = bundle.entries[k];
    entries.push_back({{"tag", e.tag},
                       {"region_tag", e.params.region_tag ? json(e.params.region_tag->name())
                                                          : json(nullptr)},
                       {"params_file", params_file(k)},
                       {"normalizer", norm_json(e.norm)}});
  }
  meta["entries"] = entries;

  json records = json::array();
  for (const auto& r : bundle.history) {
    records.push_back({{"stage", r.stage},
                       {"step", r.step},
                       {"step_name", r.step_name},
                       {"epoch", r.epoch},
                       {"train", breakdown_json(r.train)},
                       {"val_mse", r.val_mse},
                       {"val_guard", r.val_guard ? json(*r.val_guard) : json(nullptr)},
                       {"improved", r.improved}});
  }
  const json history = {{"format_version", kBundleFormatVersion}, {"records", records}};

  if (fs::exists(dir) && !fs::is_empty(dir) && !fs::exists(dir / "bundle.json")) {
    throw DataError("refusing to overwrite " + dir.string() + ": not a bundle directory");
  }
  fs::path staging = dir;
  staging += ".partial";
  std::error_code ec;
  fs::remove_all(staging, ec);
  fs::create_directories(staging / "params", ec);
  if (ec) throw DataError("cannot create " + staging.string() + ": " + ec.message());
  for (std::size_t k = 0; k < bundle.entries.size(); ++k) {
    io::write_text_atomic(staging / params_file(k), params_json(bundle.entries[k]).dump() + "\n");
  }
  io::write_text_atomic(staging / "history.json", history.dump(1) + "\n");
  io::write_text_atomic(staging / "bundle.json", meta.dump(2) + "\n");
  fs::remove_all(dir, ec);
  if (ec) throw DataError("cannot replace " + dir.string() + ": " + ec.message());
  fs::rename(staging, dir, ec);
  if (ec) throw DataError("cannot move bundle into " + dir.string() + ": " + ec.message());
}

TrainedBundle load_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw NotFoundError("bundle directory " + dir.string() + " not found");
  if (!fs::exists(dir / "bundle.json")) {
    throw NotFoundError("no bundle.json in " + dir.string());
  }
  TrainedBundle b;
  try {
    const json meta = parse_file(dir / "bundle.json");
    check_version(meta, "bundle.json");
    b.format_version = meta.at("format_version").get<int>();
    const auto level = model::level_from_int(meta.at("awareness_level").get<int>());
    const json& m = meta.at("model");
    b.model = model::ModelConfig::for_level(level, m.at("hidden_dim").get<std::size_t>(),
                                            m.at("n_layers").get<std::size_t>(),
                                            m.at("att_dim").get<std::size_t>());
    if (m.at("input_dim").get<std::size_t>() != b.model.input_dim) {
      throw FormatError("bundle.json: input_dim does not match the level's feature layout");
    }
    b.feature_layout = meta.at("feature_layout").get<std::vector<std::string>>();
    if (b.feature_layout != model::feature_layout(level)) {
      throw FormatError("bundle.json: feature layout does not match awareness level");
    }
    b.config_hash = meta.at("config_hash").get<std::string>();
    b.seed = meta.at("seed").get<std::uint64_t>();

    for (const auto& je : meta.at("entries")) {
      BundleEntry e;
      e.tag = je.at("tag").get<std::string>();
      e.norm = norm_from(je.at("normalizer"));
      const std::string file = je.at("params_file").get<std::string>();
      const json jp = parse_file(dir / file);
      check_version(jp, file);
      e.params = model::ModelParams::zeros(b.model);
      auto blocks = e.params.blocks();
      const json& jb = jp.at("blocks");
      if (jb.size() != blocks.size()) {
        throw FormatError(file + ": " + std::to_string(jb.size()) + " blocks, expected " +
                          std::to_string(blocks.size()));
      }
      for (std::size_t k = 0; k < blocks.size(); ++k) {
        const auto& blk = jb[k];
        const auto values = blk.at("values").get<std::vector<double>>();
        if (blk.at("name").get<std::string>() != blocks[k].name ||
            blk.at("rows").get<std::size_t>() != blocks[k].rows ||
            blk.at("cols").get<std::size_t>() != blocks[k].cols ||
            values.size() != blocks[k].values.size()) {
          throw FormatError(file + ": block " + std::to_string(k) + " does not match " +
                            blocks[k].name);
        }
        std::copy(values.begin(), values.end(), blocks[k].values.begin());
      }
      if (!je.at("region_tag").is_null()) {
        e.params.region_tag = RegionId(je.at("region_tag").get<std::string>());
      }
      b.entries.push_back(std::move(e));
    }

    const json history = parse_file(dir / "history.json");
    check_version(history, "history.json");
    for (const auto& jr : history.at("records")) {
      EpochRecord r;
      r.stage = jr.at("stage").get<std::string>();
      r.step = jr.at("step").get<int>();
      r.step_name = jr.at("step_name").get<std::string>();
      r.epoch = jr.at("epoch").get<int>();
      r.train = breakdown_from(jr.at("train"));
      r.val_mse = jr.at("val_mse").get<double>();
      if (!jr.at("val_guard").is_null()) r.val_guard = jr.at("val_guard").get<double>();
      r.improved = jr.at("improved").get<bool>();
      b.history.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw FormatError("bundle " + dir.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError("bundle " + dir.string() + ": " + e.what());
  }
  if (b.entries.empty()) throw FormatError("bundle " + dir.string() + " has no entries");
  return b;
}

}  // namespace sdsa::pipeline
