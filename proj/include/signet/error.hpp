#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace signet {

// Error categories map onto CLI exit codes: usage -> 1, everything else -> 2.
enum class ErrorKind {
  shape,    // tensor/layer dimension mismatch
  format,   // malformed file (SLRC clip, SLCK checkpoint)
  data,     // bad labels, empty datasets, unreadable records
  config,   // invalid or inconsistent configuration
  numeric,  // NaN/Inf or division by zero in the numeric core
  io,       // filesystem failures
  usage,    // API or CLI misuse
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// File-format violations carry the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& message, std::uint64_t offset)
      : Error(ErrorKind::format,
              message + " at byte offset " + std::to_string(offset)),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace signet
