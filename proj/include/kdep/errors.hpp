#pragma once

#include <stdexcept>
#include <string>

namespace kdep {

// Base class for everything this library throws.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/size mismatch between matrices, vectors, or requested ranks.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Iteration failure or non-finite values where finite math is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Out-of-range scalar parameter (temperatures, exponents, fractions).
class ParamError : public Error {
 public:
  using Error::Error;
};

// Operation applied to an artifact kind that does not support it.
class KindError : public Error {
 public:
  using Error::Error;
};

// Tensor shape incompatible with a network layer.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid layer sequence or dataset specification.
class SpecError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Std-matching requested without the required pre-projection statistics.
class MissingStatsError : public Error {
 public:
  using Error::Error;
};

// Filesystem failure while reading or writing artifacts.
class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed artifact file; carries the byte offset of the defect.
class FormatError : public Error {
 public:
  FormatError(const std::string& msg, std::size_t offset)
      : Error(msg + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Degenerate geometry (coincident class centroids, too few classes).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

}  // namespace kdep
