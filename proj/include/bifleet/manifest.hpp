#pragma once

#include <map>
#include <string>
#include <vector>

namespace bifleet {

// Audit record written atomically next to every output artifact. A run is
// reproducible from its manifest: the resolved config plus input digests
// pin everything the subcommand consumed.
struct RunManifest {
  std::string subcommand;
  std::map<std::string, std::string> config;        // fully resolved key=value view
  std::map<std::string, std::string> input_digests; // path -> fnv1a64 of content
  std::vector<std::string> outputs;
  uint64_t seed = 0;
  std::string tool_version;
  std::string started_at;   // UTC, ISO-8601
  std::string finished_at;

  void add_input(const std::string& path);
  std::string to_json() const;
  static RunManifest from_file(const std::string& path);
  // tmp-file + rename so readers never observe a partial manifest.
  void write(const std::string& path) const;
};

std::string current_utc_timestamp();
extern const char* kToolVersion;

}  // namespace bifleet
