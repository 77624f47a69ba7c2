#pragma once

#include <stdexcept>
#include <string>

namespace fairbide {

// Error categories map onto CLI exit codes: config=2, data=3, numeric=4.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(msg) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

}  // namespace fairbide
