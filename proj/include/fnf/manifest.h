#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace fnf {

// Every CLI run writes one of these next to its outputs. Outputs are
// bit-reproducible from (command, config, seed, inputs); the timestamps are
// bookkeeping only.
struct RunManifest {
  std::string command;
  std::string config_json;
  uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;  // (path, blob hash)
  std::string started_at;
  std::string finished_at;
};

std::string iso8601_utc_now();
void write_manifest(const std::string& path, const RunManifest& m);

}  // namespace fnf
