#pragma once

#include <stdexcept>
#include <string>

#include "fnf/evaluation.h"
#include "fnf/network.h"
#include "fnf/simulation.h"
#include "fnf/training.h"

namespace fnf {

// Invalid flags, config keys or values. The CLI maps this to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AppConfig {
  SimConfig sim;
  NetworkConfig network;
  TrainConfig train;
  int n_train_scenes = 128;
  int n_val_scenes = 8;
};

// Built-in bundles. "desk" is sized for laptop-class experiments, "paper" is
// the full-scale configuration.
AppConfig make_preset(const std::string& name);

// Strict JSON: unknown keys raise UsageError naming the key. Values present
// in the file override the passed-in defaults.
void merge_app_config_json(AppConfig& cfg, const std::string& json_text,
                           const std::string& origin);
AppConfig load_app_config(const std::string& path, AppConfig defaults);
std::string app_config_json(const AppConfig& cfg);

EvalProtocol load_protocol(const std::string& path, EvalProtocol defaults);
std::string protocol_json(const EvalProtocol& protocol);

}  // namespace fnf
