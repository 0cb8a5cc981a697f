#ifndef VREID_ERRORS_HPP
#define VREID_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace vreid {

// Error taxonomy shared by the library and the CLI exit-code mapping:
// ConfigError -> 2, DataError -> 3, NumericError -> 4.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace vreid

#endif  // VREID_ERRORS_HPP
