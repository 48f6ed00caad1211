#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mclab {

enum class ErrorCode {
  EmptyRegion,
  DegenerateIntensity,
  InvalidSpacing,
  BadMagic,
  VersionMismatch,
  TruncatedPayload,
  InvalidDtype,
  ProfileInvalid,
  InvalidThickness,
  DimsMismatch,
  NoVolumes,
  EmptyMask,
  TooFewSamples,
  ShapeMismatch,
  GraphNotScalar,
  EmptySplit,
  MissingTeacher,
  EmptyTrainSplit,
  TooFewCenters,
  ArchitectureMismatch,
  Io,
  Config,
  IncompatibleRuns,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so the
// CLI can map it onto a stable exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mclab
