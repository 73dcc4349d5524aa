#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedq {

// Root of every error the library throws. Callers that only need to report
// a diagnostic can catch this; the subclasses let tests pin the category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration (shapes, counts, divisibility).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or out-of-range input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Bad argument to a pure function (e.g. k out of range).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Broken internal contract: stale cache, over-accumulation.
class InternalError : public Error {
 public:
  using Error::Error;
};

// Value cannot be represented by the wire format.
class EncodingError : public Error {
 public:
  using Error::Error;
};

class DecodingError : public Error {
 public:
  DecodingError(const std::string& what, std::size_t byte_offset)
      : Error(what + " (at byte offset " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace fedq
