#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace maskfeat {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on shapes, counts or configuration values was violated.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Channel statistics with a non-positive standard deviation.
class InvalidStats : public Error {
 public:
  using Error::Error;
};

/// A mask generator ran out of attempts before reaching its target ratio.
class PartialMask : public Error {
 public:
  PartialMask(const std::string& what, double achieved_ratio)
      : Error(what), achieved_ratio_(achieved_ratio) {}

  double achieved_ratio() const noexcept { return achieved_ratio_; }

 private:
  double achieved_ratio_;
};

/// Malformed or truncated file content. `offset` is the byte position at
/// which the reader gave up.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Filesystem-level failure (missing file, unwritable path).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace maskfeat
