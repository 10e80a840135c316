#pragma once

#include <stdexcept>
#include <string>

namespace ghostlab {

// Error taxonomy mirrors the CLI exit codes:
//   ConfigError           -> 2 (bad config file, bad flags, malformed inputs)
//   NumericError          -> 3 (quadrature or fit failed to meet tolerance)
//   InsufficientDataError -> 4 (data cannot support the requested estimate)

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
  ConfigError(const std::string& file, int line, const std::string& msg)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + msg) {}
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ghostlab
