#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bifleet {

// Error taxonomy. Every throw site names the violated contract in the message.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ContractViolation : std::logic_error {
  explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

LogLevel log_level();
void set_log_level(LogLevel level);
bool set_log_level(const std::string& name);  // "error" | "warn" | "info" | "debug"
void log_message(LogLevel level, const std::string& msg);

template <typename... Args>
std::string cat(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

template <typename... Args>
void log_error(Args&&... args) {
  log_message(LogLevel::kError, cat(std::forward<Args>(args)...));
}
template <typename... Args>
void log_warn(Args&&... args) {
  log_message(LogLevel::kWarn, cat(std::forward<Args>(args)...));
}
template <typename... Args>
void log_info(Args&&... args) {
  log_message(LogLevel::kInfo, cat(std::forward<Args>(args)...));
}
template <typename... Args>
void log_debug(Args&&... args) {
  log_message(LogLevel::kDebug, cat(std::forward<Args>(args)...));
}

std::vector<std::string> split(const std::string& s, char sep);
std::string trim(const std::string& s);

// FNV-1a 64-bit over a file's bytes, hex-encoded. Used for run manifests.
std::string file_digest(const std::string& path);

}  // namespace bifleet
