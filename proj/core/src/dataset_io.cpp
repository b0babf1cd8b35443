#include "sdsa/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace sdsa::io {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view field, std::string_view what) {
  double v = 0.0;
  const char* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, v);
  if (field.empty() || res.ec != std::errc{} || res.ptr != end) {
    throw DataError("cannot parse " + std::string(what) + " value '" + std::string(field) + "'");
  }
  return v;
}

void write_text_atomic(const fs::path& path, std::string_view content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw DataError("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw DataError("cannot move " + tmp.string() + " to " + path.string());
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// CSV

namespace {

constexpr std::string_view kStaticHeader =
    "sample_id,lat,lon,clay_frac,om_pct,yield_target,yield_observed";
constexpr std::string_view kDailyHeader =
    "sample_id,day_index,t_air_c,srad_mj,precip_mm,moisture_frac,gpp,ra,rh,flux_observed";

std::string cell(double v) { return is_missing(v) ? std::string() : format_double(v); }

void check_id(const std::string& id) {
  if (id.empty() || id.find_first_of(",\n\r\"") != std::string::npos) {
    throw DataError("sample id '" + id + "' is empty or contains CSV metacharacters");
  }
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
    pos = nl + 1;
  }
  return lines;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
}

bool parse_flag(std::string_view f, std::string_view what) {
  if (f == "1") return true;
  if (f == "0") return false;
  throw DataError(std::string(what) + " must be 0 or 1, got '" + std::string(f) + "'");
}

std::size_t parse_index(std::string_view f) {
  std::size_t v = 0;
  const char* end = f.data() + f.size();
  const auto res = std::from_chars(f.data(), end, v);
  if (f.empty() || res.ec != std::errc{} || res.ptr != end) {
    throw DataError("day_index '" + std::string(f) + "' is not a nonnegative integer");
  }
  return v;
}

}  // namespace

std::string static_csv(const Dataset& ds) {
  std::string out(kStaticHeader);
  out += '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.samples[i];
    const auto& t = ds.targets[i];
    check_id(s.sample_id);
    out += s.sample_id;
    for (double v : {s.lat, s.lon, s.clay_frac, s.om_pct}) {
      out += ',';
      out += format_double(v);
    }
    out += ',';
    if (t.yield_observed) out += format_double(t.yield_target);
    out += t.yield_observed ? ",1\n" : ",0\n";
  }
  return out;
}

std::string daily_csv(const Dataset& ds) {
  std::string out(kDailyHeader);
  out += '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.samples[i];
    const auto& t = ds.targets[i];
    check_id(s.sample_id);
    if (t.length() != s.length() || t.mask.size() != s.length()) {
      throw ShapeError("sample " + s.sample_id + ": targets do not cover its days");
    }
    for (std::size_t d = 0; d < s.length(); ++d) {
      out += s.sample_id;
      out += ',';
      out += std::to_string(d);
      for (std::size_t k = 0; k < kDriverCount; ++k) {
        out += ',';
        out += cell(driver_at(s.days[d], k));
      }
      if (t.mask[d]) {
        out += ',';
        out += format_double(t.ra[d]);
        out += ',';
        out += format_double(t.rh[d]);
        out += ",1\n";
      } else {
        out += ",,,0\n";
      }
    }
  }
  return out;
}

Dataset parse_dataset(std::string_view static_text, std::string_view daily_text) {
  const auto static_lines = split_lines(static_text);
  if (static_lines.empty() || static_lines.front() != kStaticHeader) {
    throw DataError("static.csv: missing or unexpected header");
  }
  Dataset ds;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t li = 1; li < static_lines.size(); ++li) {
    const auto f = split_fields(static_lines[li]);
    if (f.size() != 7) {
      throw DataError("static.csv line " + std::to_string(li + 1) + ": expected 7 fields, got " +
                      std::to_string(f.size()));
    }
    SampleSeries s;
    s.sample_id = std::string(f[0]);
    check_id(s.sample_id);
    s.lat = parse_double(f[1], "lat");
    s.lon = parse_double(f[2], "lon");
    s.clay_frac = parse_double(f[3], "clay_frac");
    s.om_pct = parse_double(f[4], "om_pct");
    TargetSeries t;
    t.yield_observed = parse_flag(f[6], "yield_observed");
    if (t.yield_observed) {
      t.yield_target = parse_double(f[5], "yield_target");
    } else if (!f[5].empty()) {
      throw DataError("sample " + s.sample_id + ": yield_target given but yield_observed is 0");
    }
    if (!index.emplace(s.sample_id, ds.size()).second) {
      throw DataError("static.csv: duplicate sample id " + s.sample_id);
    }
    ds.samples.push_back(std::move(s));
    ds.targets.push_back(std::move(t));
  }

  const auto daily_lines = split_lines(daily_text);
  if (daily_lines.empty() || daily_lines.front() != kDailyHeader) {
    throw DataError("daily.csv: missing or unexpected header");
  }
  if (daily_lines.size() == 1) throw DataError("daily.csv: no rows");

  struct Row {
    std::size_t day;
    DailyDrivers drivers;
    double ra, rh;
    bool observed;
  };
  std::vector<std::vector<Row>> rows(ds.size());
  for (std::size_t li = 1; li < daily_lines.size(); ++li) {
    const auto f = split_fields(daily_lines[li]);
    if (f.size() != 10) {
      throw DataError("daily.csv line " + std::to_string(li + 1) + ": expected 10 fields, got " +
                      std::to_string(f.size()));
    }
    const auto it = index.find(std::string(f[0]));
    if (it == index.end()) {
      throw DataError("daily.csv: sample id " + std::string(f[0]) + " not present in static.csv");
    }
    Row r{};
    r.day = parse_index(f[1]);
    for (std::size_t k = 0; k < kDriverCount; ++k) {
      driver_at(r.drivers, k) =
          f[2 + k].empty() ? missing_value() : parse_double(f[2 + k], kDriverNames[k]);
    }
    r.observed = parse_flag(f[9], "flux_observed");
    if (r.observed) {
      r.ra = parse_double(f[7], "ra");
      r.rh = parse_double(f[8], "rh");
    } else {
      if (!f[7].empty() || !f[8].empty()) {
        throw DataError("sample " + std::string(f[0]) + " day " + std::string(f[1]) +
                        ": flux values given but flux_observed is 0");
      }
      r.ra = r.rh = 0.0;
    }
    rows[it->second].push_back(r);
  }

  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto& rs = rows[i];
    const std::string& id = ds.samples[i].sample_id;
    if (rs.empty()) throw DataError("sample " + id + " has no daily rows");
    std::stable_sort(rs.begin(), rs.end(), [](const Row& a, const Row& b) { return a.day < b.day; });
    for (std::size_t d = 0; d < rs.size(); ++d) {
      if (rs[d].day != d) {
        throw DataError("sample " + id + ": day_index is not contiguous from 0 (found " +
                        std::to_string(rs[d].day) + " at position " + std::to_string(d) + ")");
      }
    }
    auto& s = ds.samples[i];
    auto& t = ds.targets[i];
    s.days.reserve(rs.size());
    t.ra.reserve(rs.size());
    t.rh.reserve(rs.size());
    t.mask.reserve(rs.size());
    for (const Row& r : rs) {
      s.days.push_back(r.drivers);
      t.ra.push_back(r.ra);
      t.rh.push_back(r.rh);
      t.mask.push_back(r.observed ? 1 : 0);
    }
  }
  return ds;
}

Dataset load_dataset(const fs::path& static_path, const fs::path& daily_path) {
  return parse_dataset(read_text(static_path), read_text(daily_path));
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

json preset_json(const synth::RegionProcessParams& p) {
  json j = json::object();
  j["q10"] = p.q10;
  j["r_base"] = p.r_base;
  j["f_ra"] = p.f_ra;
  j["lue"] = p.lue;
  j["t_mean_c"] = p.t_mean_c;
  j["t_amp_c"] = p.t_amp_c;
  j["m_eq"] = p.m_eq;
  j["k_om"] = p.k_om;
  j["harvest_index"] = p.harvest_index;
  j["noise_sigma"] = p.noise_sigma;
  return j;
}

synth::RegionProcessParams preset_from(const json& j) {
  synth::RegionProcessParams p;
  p.q10 = j.at("q10").get<double>();
  p.r_base = j.at("r_base").get<double>();
  p.f_ra = j.at("f_ra").get<double>();
  p.lue = j.at("lue").get<double>();
  p.t_mean_c = j.at("t_mean_c").get<double>();
  p.t_amp_c = j.at("t_amp_c").get<double>();
  p.m_eq = j.at("m_eq").get<double>();
  p.k_om = j.at("k_om").get<double>();
  p.harvest_index = j.at("harvest_index").get<double>();
  p.noise_sigma = j.at("noise_sigma").get<double>();
  return p;
}

}  // namespace

std::string manifest_json(const DatasetManifest& m) {
  json j;
  j["schema_version"] = m.schema_version;
  j["kind"] = m.kind;
  j["seed"] = m.seed;
  j["n_days"] = m.n_days;
  json presets = json::object();
  for (const auto& [id, p] : m.presets) presets[id.name()] = preset_json(p);
  j["presets"] = presets;
  json regions = json::object();
  for (const auto& [sample, region] : m.sample_regions) regions[sample] = region.name();
  j["sample_regions"] = regions;
  return j.dump(2) + "\n";
}

DatasetManifest parse_manifest(std::string_view text) {
  try {
    const json j = json::parse(text);
    DatasetManifest m;
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != kDatasetSchemaVersion) {
      throw FormatError("dataset manifest schema_version " + std::to_string(m.schema_version) +
                        " is not supported (expected " + std::to_string(kDatasetSchemaVersion) +
                        ")");
    }
    m.kind = j.at("kind").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.n_days = j.at("n_days").get<int>();
    for (const auto& [name, p] : j.at("presets").items()) m.presets[RegionId(name)] = preset_from(p);
    for (const auto& [sample, region] : j.at("sample_regions").items()) {
      m.sample_regions.emplace(sample, RegionId(region.get<std::string>()));
    }
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset manifest: ") + e.what());
  }
}

void write_dataset_dir(const fs::path& dir, const Dataset& ds, const DatasetManifest& manifest) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
  // Render everything first so a formatting error leaves no files behind.
  const std::string s = static_csv(ds);
  const std::string d = daily_csv(ds);
  const std::string m = manifest_json(manifest);
  write_text_atomic(dir / "static.csv", s);
  write_text_atomic(dir / "daily.csv", d);
  write_text_atomic(dir / "manifest.json", m);
}

LoadedDataset read_dataset_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw NotFoundError("dataset directory " + dir.string() + " not found");
  LoadedDataset out;
  out.data = load_dataset(dir / "static.csv", dir / "daily.csv");
  out.manifest = parse_manifest(read_text(dir / "manifest.json"));
  return out;
}

}  // namespace sdsa::io
