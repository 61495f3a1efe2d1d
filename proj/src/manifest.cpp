#include "bifleet/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "bifleet/common.hpp"

namespace bifleet {

using nlohmann::json;

const char* kToolVersion = "bifleet 0.1.0";

std::string current_utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void RunManifest::add_input(const std::string& path) {
  input_digests[path] = file_digest(path);
}

std::string RunManifest::to_json() const {
  json j;
  j["subcommand"] = subcommand;
  j["config"] = json::object();
  for (const auto& [k, v] : config) j["config"][k] = v;
  j["inputs"] = json::object();
  for (const auto& [k, v] : input_digests) j["inputs"][k] = v;
  j["outputs"] = outputs;
  j["seed"] = seed;
  j["tool_version"] = tool_version;
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  return j.dump(2);
}

RunManifest RunManifest::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(cat("invalid manifest JSON: ", e.what()));
  }
  RunManifest m;
  m.subcommand = j.at("subcommand").get<std::string>();
  for (auto it = j.at("config").begin(); it != j.at("config").end(); ++it) {
    m.config[it.key()] = it.value().get<std::string>();
  }
  for (auto it = j.at("inputs").begin(); it != j.at("inputs").end(); ++it) {
    m.input_digests[it.key()] = it.value().get<std::string>();
  }
  m.outputs = j.at("outputs").get<std::vector<std::string>>();
  m.seed = j.at("seed").get<uint64_t>();
  m.tool_version = j.at("tool_version").get<std::string>();
  m.started_at = j.at("started_at").get<std::string>();
  m.finished_at = j.at("finished_at").get<std::string>();
  return m;
}

void RunManifest::write(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write manifest: " + tmp);
    out << to_json() << "\n";
    if (!out) throw IoError("manifest write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace bifleet
