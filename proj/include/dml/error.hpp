#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dml {

// Every failure the library reports carries one of these kinds so callers
// (tests, the CLI exit-code mapping) can branch without parsing messages.
enum class ErrorKind {
  ZeroVector,
  DimMismatch,
  KTooLarge,
  BadDim,
  DegenerateData,
  InvalidArgument,
  InsufficientNeighbors,
  LengthMismatch,
  DegenerateSeries,
  NoPairs,
  NoTriplets,
  NoPositives,
  NoNegatives,
  UnknownKind,
  UnknownClass,
  KinkProximity,
  TooFewClasses,
  StaleCache,
  ShapeMismatch,
  DisjointnessViolation,
  NonFiniteLoss,
  EmptySpace,
  ParseError,
  ValidationError,
  SeparationInfeasible,
  IoError,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) fail(kind, what);
}

}  // namespace dml
