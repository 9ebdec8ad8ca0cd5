/**
 * @file
 * @brief Exception types shared by every ipod component.
 */
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ipod {

/// Root of the ipod exception hierarchy.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class SizeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite entries, empty inputs, or violated argument ranges.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of a bound check does not hold.
class PreconditionViolation : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public Error {
 public:
  NotPositiveDefinite(std::int64_t pivot, double value)
      : Error("matrix is not positive definite: pivot " + std::to_string(pivot) +
              " is " + std::to_string(value)),
        pivot_(pivot) {}

  /// Zero-based row index of the failing pivot.
  std::int64_t pivot() const noexcept { return pivot_; }

 private:
  std::int64_t pivot_;
};

class RankDeficient : public Error {
 public:
  explicit RankDeficient(std::int64_t column)
      : Error("column " + std::to_string(column) +
              " is numerically dependent on the preceding columns"),
        column_(column) {}

  std::int64_t column() const noexcept { return column_; }

 private:
  std::int64_t column_;
};

/// The first column of a stream has (numerically) zero weighted norm.
class ZeroColumn : public Error {
 public:
  using Error::Error;
};

/// Singular vectors are exactly orthogonal, so no sign can be chosen.
class AmbiguousAlignment : public Error {
 public:
  using Error::Error;
};

class IntegrationFailure : public Error {
 public:
  IntegrationFailure(const std::string& what, double time_reached)
      : Error(what + " (t = " + std::to_string(time_reached) + ")"),
        time_(time_reached) {}

  double time_reached() const noexcept { return time_; }

 private:
  double time_;
};

/// Malformed file header or content.
class FormatError : public Error {
 public:
  using Error::Error;
};

class CorruptStream : public Error {
 public:
  CorruptStream(const std::string& what, std::uint64_t offset)
      : Error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class CorruptCheckpoint : public Error {
 public:
  using Error::Error;
};

}  // namespace ipod
