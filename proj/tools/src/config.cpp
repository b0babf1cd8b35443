#include "sdsa_cli/config.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include <nlohmann/json.hpp>

#include "sdsa/dataset_io.hpp"

namespace sdsa::cli {

using nlohmann::json;

namespace {

// Reads one JSON object, requiring every key it is asked for and rejecting
// any it was not.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  const json& raw(const std::string& key) {
    const auto it = j_.find(key);
    if (it == j_.end()) throw ConfigError(where() + ": missing key '" + key + "'");
    seen_.insert(key);
    return *it;
  }

  template <typename T>
  T get(const std::string& key) {
    const json& v = raw(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(key_path(key) + " must be a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(key_path(key) + " must be an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_integer() && !v.is_number_unsigned()) {
            throw ConfigError(key_path(key) + " must be >= 0");
          }
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(key_path(key) + " must be a number");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(key_path(key) + ": " + e.what());
    }
  }

  ObjectReader child(const std::string& key) { return ObjectReader(raw(key), key_path(key)); }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError(where() + ": unknown key '" + key + "'");
    }
  }

 private:
  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }
  std::string where() const { return path_.empty() ? std::string("config") : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

synth::RegionProcessParams read_preset(ObjectReader r) {
  synth::RegionProcessParams p;
  p.q10 = r.get<double>("q10");
  p.r_base = r.get<double>("r_base");
  p.f_ra = r.get<double>("f_ra");
  p.lue = r.get<double>("lue");
  p.t_mean_c = r.get<double>("t_mean_c");
  p.t_amp_c = r.get<double>("t_amp_c");
  p.m_eq = r.get<double>("m_eq");
  p.k_om = r.get<double>("k_om");
  p.harvest_index = r.get<double>("harvest_index");
  p.noise_sigma = r.get<double>("noise_sigma");
  r.finish();
  return p;
}

json preset_json(const synth::RegionProcessParams& p) {
  return {{"q10", p.q10},
          {"r_base", p.r_base},
          {"f_ra", p.f_ra},
          {"lue", p.lue},
          {"t_mean_c", p.t_mean_c},
          {"t_amp_c", p.t_amp_c},
          {"m_eq", p.m_eq},
          {"k_om", p.k_om},
          {"harvest_index", p.harvest_index},
          {"noise_sigma", p.noise_sigma}};
}

regions::OutOfRegionPolicy policy_from(const std::string& s) {
  if (s == "reject") return regions::OutOfRegionPolicy::reject;
  if (s == "nearest") return regions::OutOfRegionPolicy::nearest;
  throw ConfigError("regions.out_of_region_policy must be 'reject' or 'nearest', got '" + s + "'");
}

const char* policy_name(regions::OutOfRegionPolicy p) {
  return p == regions::OutOfRegionPolicy::reject ? "reject" : "nearest";
}

ExperimentConfig from_json(const json& j) {
  ExperimentConfig c;
  ObjectReader root(j, "");
  c.seed = root.get<std::uint64_t>("seed");

  {
    ObjectReader r = root.child("regions");
    c.regions.out_of_region_policy = policy_from(r.get<std::string>("out_of_region_policy"));
    const json& boxes = r.raw("boxes");
    if (!boxes.is_array()) throw ConfigError("regions.boxes must be an array");
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      ObjectReader b(boxes[i], "regions.boxes[" + std::to_string(i) + "]");
      regions::RegionEntry e;
      e.id = RegionId(b.get<std::string>("id"));
      e.box.lat_min = b.get<double>("lat_min");
      e.box.lat_max = b.get<double>("lat_max");
      e.box.lon_min = b.get<double>("lon_min");
      e.box.lon_max = b.get<double>("lon_max");
      b.finish();
      c.regions.regions.push_back(e);
    }
    r.finish();
  }
  {
    ObjectReader g = root.child("generator");
    c.generator.observed_samples_per_region = g.get<int>("observed_samples_per_region");
    c.generator.synthetic_samples_per_region = g.get<int>("synthetic_samples_per_region");
    c.generator.n_days = g.get<int>("n_days");
    c.generator.drivers.start_day = g.get<int>("start_day");
    ObjectReader n = g.child("driver_noise");
    c.generator.drivers.noise.t_sigma = n.get<double>("t_sigma");
    c.generator.drivers.noise.srad_sigma = n.get<double>("srad_sigma");
    c.generator.drivers.noise.moisture_sigma = n.get<double>("moisture_sigma");
    c.generator.drivers.noise.precip_mean = n.get<double>("precip_mean");
    n.finish();
    const json& presets = g.raw("presets");
    if (!presets.is_object()) throw ConfigError("generator.presets must be an object");
    for (const auto& [name, pj] : presets.items()) {
      c.generator.presets[RegionId(name)] = read_preset(ObjectReader(pj, "generator.presets." + name));
    }
    g.finish();
  }
  {
    ObjectReader o = root.child("observation");
    c.observation.flux_site_fraction = o.get<double>("flux_site_fraction");
    c.observation.flux_day_fraction = o.get<double>("flux_day_fraction");
    c.observation.yield_fraction = o.get<double>("yield_fraction");
    c.observation.gap_probability = o.get<double>("gap_probability");
    c.observation.gap_length = o.get<int>("gap_length");
    o.finish();
  }
  {
    ObjectReader m = root.child("model");
    c.model.hidden_dim = m.get<std::size_t>("hidden_dim");
    c.model.n_layers = m.get<std::size_t>("n_layers");
    c.model.att_dim = m.get<std::size_t>("att_dim");
    m.finish();
  }
  {
    ObjectReader l = root.child("loss");
    c.loss.flux_weight = l.get<double>("flux_weight");
    c.loss.yield_weight = l.get<double>("yield_weight");
    c.loss.lambda_nonneg = l.get<double>("lambda_nonneg");
    c.loss.lambda_budget = l.get<double>("lambda_budget");
    c.loss.lambda_response = l.get<double>("lambda_response");
    c.loss.lambda_l2 = l.get<double>("lambda_l2");
    c.loss.response_delta_t = l.get<double>("response_delta_t");
    l.finish();
  }
  {
    ObjectReader p = root.child("protocol");
    c.protocol.patience = p.get<int>("patience");
    c.protocol.batch_size = p.get<std::size_t>("batch_size");
    c.protocol.beta1 = p.get<double>("beta1");
    c.protocol.beta2 = p.get<double>("beta2");
    c.protocol.eps = p.get<double>("eps");
    c.protocol.threads = p.get<std::size_t>("threads");
    const json& steps = p.raw("steps");
    if (!steps.is_array()) throw ConfigError("protocol.steps must be an array");
    for (std::size_t i = 0; i < steps.size(); ++i) {
      ObjectReader s(steps[i], "protocol.steps[" + std::to_string(i) + "]");
      pipeline::StepConfig st;
      st.name = s.get<std::string>("name");
      st.data = pipeline::data_source_from(s.get<std::string>("data"));
      st.epochs = s.get<int>("epochs");
      st.lr = s.get<double>("lr");
      st.encoder_lr_multiplier = s.get<double>("encoder_lr_multiplier");
      st.flux = s.get<bool>("flux");
      st.yield = s.get<bool>("yield");
      st.penalties = s.get<bool>("penalties");
      st.l2 = s.get<bool>("l2");
      s.finish();
      c.protocol.steps.push_back(st);
    }
    p.finish();
  }
  {
    ObjectReader s = root.child("splits");
    c.splits.train = s.get<double>("train");
    c.splits.val = s.get<double>("val");
    c.splits.test = s.get<double>("test");
    s.finish();
  }
  c.max_gap = root.get<int>("max_gap");
  c.levels = root.get<std::vector<int>>("levels");
  root.finish();
  c.validate();
  return c;
}

bool is_fraction(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

}  // namespace

void ExperimentConfig::validate() const {
  regions.validate();
  if (generator.observed_samples_per_region < 1 || generator.synthetic_samples_per_region < 1) {
    throw ConfigError("generator: samples per region must be >= 1");
  }
  if (generator.n_days < 1) throw ConfigError("generator.n_days must be >= 1");
  for (const auto& id : regions.ids()) {
    const auto it = generator.presets.find(id);
    if (it == generator.presets.end()) {
      throw ConfigError("generator.presets: no preset for region " + id.name());
    }
    it->second.validate();
  }
  for (const auto& [id, _] : generator.presets) regions.find(id);
  const auto& n = generator.drivers.noise;
  for (double v : {n.t_sigma, n.srad_sigma, n.moisture_sigma, n.precip_mean}) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError("generator.driver_noise values must be >= 0");
  }
  for (double v : {observation.flux_site_fraction, observation.flux_day_fraction,
                   observation.yield_fraction, observation.gap_probability}) {
    if (!is_fraction(v)) throw ConfigError("observation fractions must lie in [0, 1]");
  }
  if (observation.gap_length < 1) throw ConfigError("observation.gap_length must be >= 1");
  if (model.hidden_dim < 1 || model.n_layers < 1 || model.att_dim < 1) {
    throw ConfigError("model dimensions must be positive");
  }
  loss.validate();
  protocol.validate();
  splits.validate();
  if (max_gap < 0) throw ConfigError("max_gap must be >= 0");
  if (levels.empty()) throw ConfigError("levels must not be empty");
  for (int l : levels) model::level_from_int(l);
}

pipeline::TrainConfig ExperimentConfig::train_config() const {
  pipeline::TrainConfig t;
  t.regions = regions;
  t.shape = model;
  t.loss = loss;
  t.protocol = protocol;
  t.splits = splits;
  t.max_gap = max_gap;
  t.seed = seed;
  t.config_hash = config_hash(*this);
  return t;
}

ExperimentConfig parse_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(io::read_text(path));
}

std::string config_json(const ExperimentConfig& c) {
  json boxes = json::array();
  for (const auto& e : c.regions.regions) {
    boxes.push_back({{"id", e.id.name()},
                     {"lat_min", e.box.lat_min},
                     {"lat_max", e.box.lat_max},
                     {"lon_min", e.box.lon_min},
                     {"lon_max", e.box.lon_max}});
  }
  json presets = json::object();
  for (const auto& [id, p] : c.generator.presets) presets[id.name()] = preset_json(p);
  json steps = json::array();
  for (const auto& s : c.protocol.steps) {
    steps.push_back({{"name", s.name},
                     {"data", pipeline::to_string(s.data)},
                     {"epochs", s.epochs},
                     {"lr", s.lr},
                     {"encoder_lr_multiplier", s.encoder_lr_multiplier},
                     {"flux", s.flux},
                     {"yield", s.yield},
                     {"penalties", s.penalties},
                     {"l2", s.l2}});
  }
  const auto& n = c.generator.drivers.noise;
  json j = {
      {"seed", c.seed},
      {"regions", {{"out_of_region_policy", policy_name(c.regions.out_of_region_policy)},
                   {"boxes", boxes}}},
      {"generator",
       {{"observed_samples_per_region", c.generator.observed_samples_per_region},
        {"synthetic_samples_per_region", c.generator.synthetic_samples_per_region},
        {"n_days", c.generator.n_days},
        {"start_day", c.generator.drivers.start_day},
        {"driver_noise",
         {{"t_sigma", n.t_sigma},
          {"srad_sigma", n.srad_sigma},
          {"moisture_sigma", n.moisture_sigma},
          {"precip_mean", n.precip_mean}}},
        {"presets", presets}}},
      {"observation",
       {{"flux_site_fraction", c.observation.flux_site_fraction},
        {"flux_day_fraction", c.observation.flux_day_fraction},
        {"yield_fraction", c.observation.yield_fraction},
        {"gap_probability", c.observation.gap_probability},
        {"gap_length", c.observation.gap_length}}},
      {"model",
       {{"hidden_dim", c.model.hidden_dim},
        {"n_layers", c.model.n_layers},
        {"att_dim", c.model.att_dim}}},
      {"loss",
       {{"flux_weight", c.loss.flux_weight},
        {"yield_weight", c.loss.yield_weight},
        {"lambda_nonneg", c.loss.lambda_nonneg},
        {"lambda_budget", c.loss.lambda_budget},
        {"lambda_response", c.loss.lambda_response},
        {"lambda_l2", c.loss.lambda_l2},
        {"response_delta_t", c.loss.response_delta_t}}},
      {"protocol",
       {{"patience", c.protocol.patience},
        {"batch_size", c.protocol.batch_size},
        {"beta1", c.protocol.beta1},
        {"beta2", c.protocol.beta2},
        {"eps", c.protocol.eps},
        {"threads", c.protocol.threads},
        {"steps", steps}}},
      {"splits", {{"train", c.splits.train}, {"val", c.splits.val}, {"test", c.splits.test}}},
      {"max_gap", c.max_gap},
      {"levels", c.levels},
  };
  return j.dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& cfg) {
  // thread count is not part of the provenance
  ExperimentConfig c = cfg;
  c.protocol.threads = 1;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(nd::fnv1a64(config_json(c))));
  return buf;
}

}  // namespace sdsa::cli
