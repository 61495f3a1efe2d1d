#pragma once

#include <map>
#include <string>

namespace bifleet {

// Flat key=value config files: one pair per line, '#' starts a comment,
// blank lines ignored. Values keep internal whitespace.
std::map<std::string, std::string> load_kv_file(const std::string& path);
std::map<std::string, std::string> parse_kv_text(const std::string& text);
void save_kv_file(const std::map<std::string, std::string>& kv, const std::string& path);

}  // namespace bifleet
