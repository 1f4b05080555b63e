#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace advclust {

// Runtime failure (IO, numerics, clusterer breakdown). CLI maps this to exit 3.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration or malformed experiment input. CLI maps this to exit 2.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Shortest text form that round-trips a double exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace advclust
