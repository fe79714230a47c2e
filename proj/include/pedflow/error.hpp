#pragma once

#include <stdexcept>
#include <string>

namespace pedflow {

enum class ErrorCode {
  TooFewPoints,
  DegenerateConfiguration,
  PointAtInfinity,
  SingularA,
  InvalidScenario,
  NoSpawnAreas,
  RasterMissing,
  InsufficientHistory,
  ShapeMismatch,
  EmptyDataset,
  NonFiniteLoss,
  InvalidConfig,
  InvalidTrajectory,
  RouteMismatch,
  RateTooLow,
  NoTransitions,
  ModelScenarioMismatch,
  EmptyRegion,
  LengthMismatch,
  ParseError,
  VersionMismatch,
  Io,
};

const char* to_string(ErrorCode code) noexcept;

/// Data or validation failure raised by library operations. The CLI maps
/// these to exit code 2; anything else escaping a subcommand is internal.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace pedflow
