#pragma once

#include <stdexcept>
#include <string>

namespace sisr3d {

// Error taxonomy shared by every module. The CLI maps these onto exit codes.

struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

// Statistical input with no information (e.g. all-zero paired differences).
struct DegenerateInputError : std::domain_error {
  using std::domain_error::domain_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dataset content that cannot be processed (missing volumes, unpairable
// reports, per-volume pipeline failures).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ArgumentError(msg);
}
}  // namespace detail

}  // namespace sisr3d
