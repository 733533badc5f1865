#pragma once

#include <stdexcept>
#include <string>

namespace mosk {

// Stable error codes; mirrored one-to-one by the C API status enum.
enum class ErrorCode : int {
  Config = 1,
  Io = 2,
  MissingForward = 10,
  MissingResolvent = 11,
  DimensionMismatch = 12,
  NonPositiveGamma = 13,
  NotMonotone = 14,
  PreconditionViolation = 15,
  ScheduleDomain = 20,
  NonFiniteIterate = 30,
  MetricNotPositiveDefinite = 31,
  SubproblemFailure = 32,
  WindowError = 40,
  NonPositiveResidual = 41,
  MissingSolution = 42,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace mosk
