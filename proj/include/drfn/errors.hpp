#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace drfn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or image dimensions do not satisfy an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid model / training / CLI configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Parameter maps whose key sets or shapes disagree.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures (missing files, unreadable directories).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed checkpoint, patch archive or image payload. Carries the byte
/// offset at which decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::uint64_t iteration)
      : Error(what), iteration_(iteration) {}

  std::uint64_t iteration() const noexcept { return iteration_; }

 private:
  std::uint64_t iteration_;
};

}  // namespace drfn
