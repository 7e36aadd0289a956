#pragma once

#include <charconv>
#include <stdexcept>
#include <string>

namespace tml {

// Raised for invalid configuration or malformed input files. The CLI maps it
// to exit code 2; every other std::exception maps to exit code 3.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Shortest round-trip decimal form, locale-independent; keeps CSV and JSON
// output byte-stable across runs.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace tml
