#include "bifleet/kvconfig.hpp"

#include <fstream>
#include <sstream>

#include "bifleet/common.hpp"

namespace bifleet {

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ParseError(cat("config line ", lineno, " has no '=': ", stripped));
    }
    const std::string key = trim(stripped.substr(0, eq));
    if (key.empty()) throw ParseError(cat("config line ", lineno, " has empty key"));
    kv[key] = trim(stripped.substr(eq + 1));
  }
  return kv;
}

std::map<std::string, std::string> load_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_kv_text(text);
}

void save_kv_file(const std::map<std::string, std::string>& kv, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config file: " + path);
  for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
}

}  // namespace bifleet
