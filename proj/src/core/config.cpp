#include "core/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace voxpipe {

namespace {

using nlohmann::json;

json defaults() {
  return json{
      {"seed", 1},
      {"threads", 0},
      {"out_dir", "out"},
      {"data",
       {{"cases", 587},
        {"nx", 160},
        {"spacing_xy", 1.6},
        {"nz_min", 40},
        {"nz_max", 96},
        {"thickness_min", 1.5},
        {"thickness_max", 3.0},
        {"base_radius_mm", 15.0},
        {"arch_radius_mm", 35.0},
        {"noise_sigma_ld", 40.0},
        {"noise_sigma", 15.0},
        {"aneurysm_site", "any"}}},
      {"prep",
       {{"level", 50.0},
        {"width", 400.0},
        {"spacing_xy", 1.6},
        {"spacing_z", 3.0},
        {"crop_xy", 160}}},
      {"seg",
       {{"epochs", 40},
        {"folds", 4},
        {"holdout", 12},
        {"g_base", 16},
        {"d_base", 32},
        {"lr", 1e-3},
        {"lr_alpha", 1e-6},
        {"t_mul", 1.5},
        {"m_mul", 1.0},
        {"lambda", 0.5},
        {"delta", 0.6},
        {"gamma", 0.5},
        {"smooth", 1e-6},
        {"hybrid_weight", 5.0},
        {"binarize_thresh", 0.5},
        {"min_component_frac", 0.05},
        {"augment", true},
        {"aug",
         {{"max_rot_deg", 10.0},
          {"flip_x", true},
          {"flip_y", true},
          {"elastic_alpha", 4.0},
          {"elastic_sigma", 2.0},
          {"gain_lo", 0.9},
          {"gain_hi", 1.1},
          {"gamma_lo", 0.9},
          {"gamma_hi", 1.1}}}}},
      {"cls",
       {{"epochs", 30},
        {"folds", 10},
        {"base", 32},
        {"lr", 1e-4},
        {"patience", 5},
        {"factor", 0.5},
        {"min_delta", 1e-4}}},
  };
}

bool scalar_compatible(const json& have, const json& want) {
  if (want.is_number() && have.is_number()) return true;
  if (want.is_boolean() && have.is_boolean()) return true;
  if (want.is_string() && have.is_string()) return true;
  return false;
}

void merge_strict(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) {
    throw ConfigError("config section " + (path.empty() ? "<root>" : path) +
                      " must be an object");
  }
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string here = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key: " + here);
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_strict(slot, it.value(), here);
    } else if (scalar_compatible(it.value(), slot)) {
      slot = it.value();
    } else {
      throw ConfigError("config key " + here + " has the wrong type");
    }
  }
}

void apply_override(json& base, const std::string& kv) {
  auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like section.key=value: " + kv);
  }
  const std::string dotted = kv.substr(0, eq);
  const std::string value = kv.substr(eq + 1);

  json* slot = &base;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (part.empty() || !slot->is_object() || !slot->contains(part)) {
      throw ConfigError("unknown config key: " + dotted);
    }
    slot = &(*slot)[part];
  }
  if (slot->is_object()) throw ConfigError(dotted + " is a section, not a setting");

  json parsed = json::parse(value, nullptr, false);
  if (parsed.is_discarded() || parsed.is_object() || parsed.is_array()) {
    parsed = value;  // unquoted strings pass through
  }
  if (!scalar_compatible(parsed, *slot)) {
    throw ConfigError("override " + dotted + " has the wrong type");
  }
  *slot = parsed;
}

RunConfig from_json(const json& j) {
  RunConfig c;
  c.seed = j.at("seed").get<uint64_t>();
  c.threads = j.at("threads").get<int>();
  c.out_dir = j.at("out_dir").get<std::string>();

  const json& d = j.at("data");
  c.data.cases = d.at("cases").get<int>();
  c.data.phantom.nx = d.at("nx").get<int64_t>();
  c.data.phantom.spacing_xy = d.at("spacing_xy").get<double>();
  c.data.phantom.nz_min = d.at("nz_min").get<int64_t>();
  c.data.phantom.nz_max = d.at("nz_max").get<int64_t>();
  c.data.phantom.thickness_min = d.at("thickness_min").get<double>();
  c.data.phantom.thickness_max = d.at("thickness_max").get<double>();
  c.data.phantom.base_radius_mm = d.at("base_radius_mm").get<double>();
  c.data.phantom.arch_radius_mm = d.at("arch_radius_mm").get<double>();
  c.data.phantom.noise_sigma_ld_hu = d.at("noise_sigma_ld").get<double>();
  c.data.phantom.noise_sigma_hu = d.at("noise_sigma").get<double>();
  c.data.phantom.aneurysm_site = site_from_string(d.at("aneurysm_site").get<std::string>());

  const json& p = j.at("prep");
  c.prep.window.level = p.at("level").get<double>();
  c.prep.window.width = p.at("width").get<double>();
  c.prep.spacing_xy = p.at("spacing_xy").get<double>();
  c.prep.spacing_z = p.at("spacing_z").get<double>();
  c.prep.crop_xy = p.at("crop_xy").get<int>();

  const json& s = j.at("seg");
  c.seg.epochs = s.at("epochs").get<int>();
  c.seg.folds = s.at("folds").get<int>();
  c.seg.holdout = s.at("holdout").get<int>();
  c.seg.g_base = s.at("g_base").get<int>();
  c.seg.d_base = s.at("d_base").get<int>();
  c.seg.lr = s.at("lr").get<double>();
  c.seg.lr_alpha = s.at("lr_alpha").get<double>();
  c.seg.t_mul = s.at("t_mul").get<double>();
  c.seg.m_mul = s.at("m_mul").get<double>();
  c.seg.hybrid.lambda = s.at("lambda").get<double>();
  c.seg.hybrid.delta = s.at("delta").get<double>();
  c.seg.hybrid.gamma = s.at("gamma").get<double>();
  c.seg.hybrid.smooth = s.at("smooth").get<double>();
  c.seg.hybrid_weight = s.at("hybrid_weight").get<double>();
  c.seg.binarize_thresh = s.at("binarize_thresh").get<double>();
  c.seg.min_component_frac = s.at("min_component_frac").get<double>();
  c.seg.augment = s.at("augment").get<bool>();
  c.seg.seed = c.seed;

  const json& a = s.at("aug");
  c.seg.aug.max_rot_deg = a.at("max_rot_deg").get<double>();
  c.seg.aug.flip_x = a.at("flip_x").get<bool>();
  c.seg.aug.flip_y = a.at("flip_y").get<bool>();
  c.seg.aug.elastic_alpha = a.at("elastic_alpha").get<double>();
  c.seg.aug.elastic_sigma = a.at("elastic_sigma").get<double>();
  c.seg.aug.gain_lo = a.at("gain_lo").get<double>();
  c.seg.aug.gain_hi = a.at("gain_hi").get<double>();
  c.seg.aug.gamma_lo = a.at("gamma_lo").get<double>();
  c.seg.aug.gamma_hi = a.at("gamma_hi").get<double>();

  const json& k = j.at("cls");
  c.cls.epochs = k.at("epochs").get<int>();
  c.cls.folds = k.at("folds").get<int>();
  c.cls.base = k.at("base").get<int>();
  c.cls.lr = k.at("lr").get<double>();
  c.cls.plateau.patience = k.at("patience").get<int>();
  c.cls.plateau.factor = k.at("factor").get<double>();
  c.cls.plateau.min_delta = k.at("min_delta").get<double>();
  c.cls.seed = c.seed;

  if (c.data.cases < 1 || c.data.phantom.nx < 16 ||
      c.data.phantom.nz_min < 4 || c.data.phantom.nz_max < c.data.phantom.nz_min ||
      c.prep.crop_xy < 8 || c.prep.spacing_xy <= 0 || c.prep.spacing_z <= 0 ||
      c.seg.epochs < 1 || c.seg.folds < 2 || c.seg.holdout < 0 ||
      c.seg.g_base < 1 || c.seg.d_base < 1 || c.cls.epochs < 1 || c.cls.folds < 2 ||
      c.cls.base < 1) {
    throw ConfigError("config value out of range");
  }
  return c;
}

}  // namespace

std::string default_config_json() { return defaults().dump(2); }

RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides) {
  json merged = defaults();
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    json user = json::parse(is, nullptr, false);
    if (user.is_discarded()) throw ConfigError("config file " + path + " is not valid JSON");
    merge_strict(merged, user, "");
  }
  for (const std::string& kv : overrides) apply_override(merged, kv);
  RunConfig c = from_json(merged);
  c.json_text = merged.dump(2);
  return c;
}

}  // namespace voxpipe
