#include "pedflow/error.hpp"

namespace pedflow {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::PointAtInfinity: return "PointAtInfinity";
    case ErrorCode::SingularA: return "SingularA";
    case ErrorCode::InvalidScenario: return "InvalidScenario";
    case ErrorCode::NoSpawnAreas: return "NoSpawnAreas";
    case ErrorCode::RasterMissing: return "RasterMissing";
    case ErrorCode::InsufficientHistory: return "InsufficientHistory";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidTrajectory: return "InvalidTrajectory";
    case ErrorCode::RouteMismatch: return "RouteMismatch";
    case ErrorCode::RateTooLow: return "RateTooLow";
    case ErrorCode::NoTransitions: return "NoTransitions";
    case ErrorCode::ModelScenarioMismatch: return "ModelScenarioMismatch";
    case ErrorCode::EmptyRegion: return "EmptyRegion";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace pedflow
