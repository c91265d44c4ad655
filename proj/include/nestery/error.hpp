#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nestery {

enum class ErrorCode {
  InvalidArgument,
  MalformedDocument,
  InvariantViolation,
  StorageFailure,
  UnknownMessage,
  CorruptJournal,
  AdmissionDenied,
  DuplicateUuid,
  NestingDepthExceeded,
  UnknownVm,
  IllegalState,
  ShrinkBelowChildUsage,
  StartInPast,
  InvalidDuration,
  ClockWentBackwards,
  UnknownAllocation,
  InvalidSize,
  ShrinkBelowUsed,
  UnknownVolume,
  VolumeAttached,
  InsufficientSpace,
  NotAProvider,
  SpecExceedsFreeCapacity,
  InvalidPriceBand,
  UnknownOffer,
  CapacityGone,
  UnknownContract,
  NotYourContract,
  ContractNotActive,
  IncompleteProfile,
  NoBackingCloud,
  UnknownUser,
  EmptySampleSet,
  ZeroBaseline,
  CalibrationFailed,
  Unauthorized,
  BindFailure,
};

std::string_view error_code_name(ErrorCode code);
bool parse_error_code(std::string_view name, ErrorCode& out);

// Domain error. `detail` carries the offending field or dimension where the
// operation names one (e.g. AdmissionDenied(cores) has detail "cores").
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string detail = {});

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace nestery
