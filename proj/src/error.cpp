#include "mclab/error.hpp"

namespace mclab {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyRegion: return "EmptyRegion";
    case ErrorCode::DegenerateIntensity: return "DegenerateIntensity";
    case ErrorCode::InvalidSpacing: return "InvalidSpacing";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::InvalidDtype: return "InvalidDtype";
    case ErrorCode::ProfileInvalid: return "ProfileInvalid";
    case ErrorCode::InvalidThickness: return "InvalidThickness";
    case ErrorCode::DimsMismatch: return "DimsMismatch";
    case ErrorCode::NoVolumes: return "NoVolumes";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::GraphNotScalar: return "GraphNotScalar";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::MissingTeacher: return "MissingTeacher";
    case ErrorCode::EmptyTrainSplit: return "EmptyTrainSplit";
    case ErrorCode::TooFewCenters: return "TooFewCenters";
    case ErrorCode::ArchitectureMismatch: return "ArchitectureMismatch";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Config: return "Config";
    case ErrorCode::IncompatibleRuns: return "IncompatibleRuns";
  }
  return "Unknown";
}

}  // namespace mclab
