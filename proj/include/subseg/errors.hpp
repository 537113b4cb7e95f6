#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace subseg {

// Error taxonomy used across the library. The CLI maps these onto exit codes:
// usage/parameter/config -> 1, data/format/lookup -> 2, numeric -> 3.

struct dimension_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct parameter_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct lookup_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File parsing failure; carries the byte offset where parsing stopped.
class format_error : public std::runtime_error {
 public:
  format_error(const std::string& msg, std::size_t byte_offset)
      : std::runtime_error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace subseg
