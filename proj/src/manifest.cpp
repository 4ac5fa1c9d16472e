#include "fnf/manifest.h"

#include <ctime>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace fnf {

std::string iso8601_utc_now() {
  std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

void write_manifest(const std::string& path, const RunManifest& m) {
  nlohmann::json j;
  j["command"] = m.command;
  j["config"] = nlohmann::json::parse(m.config_json.empty() ? "{}" : m.config_json);
  j["seed"] = m.seed;
  nlohmann::json inputs = nlohmann::json::object();
  for (const auto& [p, h] : m.inputs) inputs[p] = h;
  j["inputs"] = inputs;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write manifest " + path);
  os << j.dump(2) << "\n";
}

}  // namespace fnf
