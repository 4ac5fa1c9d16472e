#include "fnf/config.h"

#include <fstream>
#include <set>

#include "json.hpp"

namespace fnf {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& scope) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key))
      throw UsageError("unknown config key '" + (scope.empty() ? key : scope + "." + key) + "'");
  }
}

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void take_range(const json& j, const char* key, double& lo, double& hi) {
  if (!j.contains(key)) return;
  auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 2) throw UsageError(std::string("config key '") + key + "' needs [lo, hi]");
  lo = v[0];
  hi = v[1];
}

void merge_sim(SimConfig& sim, const json& j) {
  check_keys(j,
             {"dim_range", "log10_sigma_r", "log10_sigma_s", "rotation_deg", "scale_range",
              "translation_px", "reference", "crop"},
             "sim");
  take_range(j, "dim_range", sim.dim_lo, sim.dim_hi);
  take_range(j, "log10_sigma_r", sim.log10_sigma_r_lo, sim.log10_sigma_r_hi);
  take_range(j, "log10_sigma_s", sim.log10_sigma_s_lo, sim.log10_sigma_s_hi);
  take(j, "rotation_deg", sim.shake.rot_deg);
  take_range(j, "scale_range", sim.shake.scale_lo, sim.shake.scale_hi);
  take(j, "translation_px", sim.shake.trans_px);
  if (j.contains("reference"))
    sim.reference = reference_from_string(j.at("reference").get<std::string>());
  take(j, "crop", sim.crop);
  if (sim.crop < 32 || sim.crop % 32 != 0)
    throw UsageError("sim.crop must be >= 32 and divisible by 32");
}

void merge_network(NetworkConfig& net, const json& j) {
  check_keys(j,
             {"basis_count", "kernel_size", "upsample", "base_channels", "variant",
              "reference", "use_basis_b"},
             "network");
  take(j, "basis_count", net.basis_count);
  take(j, "kernel_size", net.kernel_size);
  take(j, "upsample", net.upsample);
  take(j, "base_channels", net.base_channels);
  if (j.contains("variant")) net.variant = variant_from_string(j.at("variant").get<std::string>());
  if (j.contains("reference"))
    net.reference = reference_from_string(j.at("reference").get<std::string>());
  take(j, "use_basis_b", net.use_basis_b);
  try {
    net.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("network config: ") + e.what());
  }
}

void merge_train(TrainConfig& tr, const json& j) {
  check_keys(j,
             {"lr_init", "lr_drop_factor", "max_drops", "eta", "batch_size", "max_steps",
              "val_interval", "patience", "seed", "checkpoint_interval"},
             "train");
  take(j, "lr_init", tr.lr_init);
  take(j, "lr_drop_factor", tr.lr_drop_factor);
  take(j, "max_drops", tr.max_drops);
  take(j, "eta", tr.eta);
  take(j, "batch_size", tr.batch_size);
  take(j, "max_steps", tr.max_steps);
  take(j, "val_interval", tr.val_interval);
  take(j, "patience", tr.patience);
  take(j, "seed", tr.seed);
  take(j, "checkpoint_interval", tr.checkpoint_interval);
  try {
    tr.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("train config: ") + e.what());
  }
}

}  // namespace

AppConfig make_preset(const std::string& name) {
  AppConfig cfg;
  if (name == "paper") {
    cfg.sim.crop = 440;
    cfg.network.basis_count = 90;
    cfg.network.kernel_size = 15;
    cfg.network.upsample = 4;
    cfg.network.base_channels = 64;
    cfg.train.max_steps = 1500000;
    cfg.train.val_interval = 2000;
    cfg.train.patience = 10;
    cfg.n_train_scenes = 2519;
    cfg.n_val_scenes = 128;
  } else if (name == "desk") {
    cfg.sim.crop = 128;
    cfg.network.basis_count = 8;
    cfg.network.kernel_size = 5;
    cfg.network.upsample = 2;
    cfg.network.base_channels = 16;
    cfg.train.max_steps = 20000;
    cfg.train.val_interval = 500;
    cfg.train.patience = 3;
    cfg.train.batch_size = 1;
    cfg.n_train_scenes = 128;
    cfg.n_val_scenes = 8;
  } else {
    throw UsageError("unknown preset '" + name + "' (expected 'desk' or 'paper')");
  }
  return cfg;
}

void merge_app_config_json(AppConfig& cfg, const std::string& json_text,
                           const std::string& origin) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw UsageError(origin + ": " + e.what());
  }
  check_keys(j, {"sim", "network", "train", "n_train_scenes", "n_val_scenes"}, "");
  if (j.contains("sim")) merge_sim(cfg.sim, j["sim"]);
  if (j.contains("network")) merge_network(cfg.network, j["network"]);
  if (j.contains("train")) merge_train(cfg.train, j["train"]);
  take(j, "n_train_scenes", cfg.n_train_scenes);
  take(j, "n_val_scenes", cfg.n_val_scenes);
}

AppConfig load_app_config(const std::string& path, AppConfig defaults) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot read config file " + path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  merge_app_config_json(defaults, text, path);
  return defaults;
}

std::string app_config_json(const AppConfig& cfg) {
  json j;
  j["sim"] = {{"dim_range", {cfg.sim.dim_lo, cfg.sim.dim_hi}},
              {"log10_sigma_r", {cfg.sim.log10_sigma_r_lo, cfg.sim.log10_sigma_r_hi}},
              {"log10_sigma_s", {cfg.sim.log10_sigma_s_lo, cfg.sim.log10_sigma_s_hi}},
              {"rotation_deg", cfg.sim.shake.rot_deg},
              {"scale_range", {cfg.sim.shake.scale_lo, cfg.sim.shake.scale_hi}},
              {"translation_px", cfg.sim.shake.trans_px},
              {"reference", to_string(cfg.sim.reference)},
              {"crop", cfg.sim.crop}};
  j["network"] = {{"basis_count", cfg.network.basis_count},
                  {"kernel_size", cfg.network.kernel_size},
                  {"upsample", cfg.network.upsample},
                  {"base_channels", cfg.network.base_channels},
                  {"variant", to_string(cfg.network.variant)},
                  {"reference", to_string(cfg.network.reference)},
                  {"use_basis_b", cfg.network.use_basis_b}};
  j["train"] = {{"lr_init", cfg.train.lr_init},
                {"lr_drop_factor", cfg.train.lr_drop_factor},
                {"max_drops", cfg.train.max_drops},
                {"eta", cfg.train.eta},
                {"batch_size", cfg.train.batch_size},
                {"max_steps", cfg.train.max_steps},
                {"val_interval", cfg.train.val_interval},
                {"patience", cfg.train.patience},
                {"seed", cfg.train.seed},
                {"checkpoint_interval", cfg.train.checkpoint_interval}};
  j["n_train_scenes"] = cfg.n_train_scenes;
  j["n_val_scenes"] = cfg.n_val_scenes;
  return j.dump(2);
}

EvalProtocol load_protocol(const std::string& path, EvalProtocol defaults) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot read protocol file " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw UsageError(path + ": " + e.what());
  }
  check_keys(j,
             {"dim_factors", "log10_sigma_r", "log10_sigma_s", "n_images",
              "displacement_bins", "reference", "seed", "crop", "misalignment_dim"},
             "");
  take(j, "dim_factors", defaults.dim_factors);
  take(j, "log10_sigma_r", defaults.log10_sigma_r);
  take(j, "log10_sigma_s", defaults.log10_sigma_s);
  take(j, "n_images", defaults.n_images);
  take(j, "displacement_bins", defaults.displacement_bins);
  if (j.contains("reference"))
    defaults.reference = reference_from_string(j.at("reference").get<std::string>());
  take(j, "seed", defaults.seed);
  take(j, "crop", defaults.crop);
  take(j, "misalignment_dim", defaults.misalignment_dim);
  if (defaults.crop < 32 || defaults.crop % 32 != 0)
    throw UsageError("protocol crop must be >= 32 and divisible by 32");
  if (defaults.n_images < 1) throw UsageError("protocol n_images must be >= 1");
  return defaults;
}

std::string protocol_json(const EvalProtocol& protocol) {
  json j;
  j["dim_factors"] = protocol.dim_factors;
  j["log10_sigma_r"] = protocol.log10_sigma_r;
  j["log10_sigma_s"] = protocol.log10_sigma_s;
  j["n_images"] = protocol.n_images;
  j["displacement_bins"] = protocol.displacement_bins;
  j["reference"] = to_string(protocol.reference);
  j["seed"] = protocol.seed;
  j["crop"] = protocol.crop;
  j["misalignment_dim"] = protocol.misalignment_dim;
  return j.dump(2);
}

}  // namespace fnf
