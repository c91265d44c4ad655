#include "nestery/error.hpp"

#include <array>
#include <utility>

namespace nestery {

namespace {

constexpr std::array<std::pair<ErrorCode, std::string_view>, 37> kNames{{
    {ErrorCode::InvalidArgument, "InvalidArgument"},
    {ErrorCode::MalformedDocument, "MalformedDocument"},
    {ErrorCode::InvariantViolation, "InvariantViolation"},
    {ErrorCode::StorageFailure, "StorageFailure"},
    {ErrorCode::UnknownMessage, "UnknownMessage"},
    {ErrorCode::CorruptJournal, "CorruptJournal"},
    {ErrorCode::AdmissionDenied, "AdmissionDenied"},
    {ErrorCode::DuplicateUuid, "DuplicateUuid"},
    {ErrorCode::NestingDepthExceeded, "NestingDepthExceeded"},
    {ErrorCode::UnknownVm, "UnknownVm"},
    {ErrorCode::IllegalState, "IllegalState"},
    {ErrorCode::ShrinkBelowChildUsage, "ShrinkBelowChildUsage"},
    {ErrorCode::StartInPast, "StartInPast"},
    {ErrorCode::InvalidDuration, "InvalidDuration"},
    {ErrorCode::ClockWentBackwards, "ClockWentBackwards"},
    {ErrorCode::UnknownAllocation, "UnknownAllocation"},
    {ErrorCode::InvalidSize, "InvalidSize"},
    {ErrorCode::ShrinkBelowUsed, "ShrinkBelowUsed"},
    {ErrorCode::UnknownVolume, "UnknownVolume"},
    {ErrorCode::VolumeAttached, "VolumeAttached"},
    {ErrorCode::InsufficientSpace, "InsufficientSpace"},
    {ErrorCode::NotAProvider, "NotAProvider"},
    {ErrorCode::SpecExceedsFreeCapacity, "SpecExceedsFreeCapacity"},
    {ErrorCode::InvalidPriceBand, "InvalidPriceBand"},
    {ErrorCode::UnknownOffer, "UnknownOffer"},
    {ErrorCode::CapacityGone, "CapacityGone"},
    {ErrorCode::UnknownContract, "UnknownContract"},
    {ErrorCode::NotYourContract, "NotYourContract"},
    {ErrorCode::ContractNotActive, "ContractNotActive"},
    {ErrorCode::IncompleteProfile, "IncompleteProfile"},
    {ErrorCode::NoBackingCloud, "NoBackingCloud"},
    {ErrorCode::UnknownUser, "UnknownUser"},
    {ErrorCode::EmptySampleSet, "EmptySampleSet"},
    {ErrorCode::ZeroBaseline, "ZeroBaseline"},
    {ErrorCode::CalibrationFailed, "CalibrationFailed"},
    {ErrorCode::Unauthorized, "Unauthorized"},
    {ErrorCode::BindFailure, "BindFailure"},
}};

std::string format_message(ErrorCode code, const std::string& detail) {
  std::string msg{error_code_name(code)};
  if (!detail.empty()) {
    msg += "(" + detail + ")";
  }
  return msg;
}

}  // namespace

std::string_view error_code_name(ErrorCode code) {
  for (const auto& [c, name] : kNames) {
    if (c == code) return name;
  }
  return "Unknown";
}

bool parse_error_code(std::string_view name, ErrorCode& out) {
  for (const auto& [c, n] : kNames) {
    if (n == name) {
      out = c;
      return true;
    }
  }
  return false;
}

Error::Error(ErrorCode code, std::string detail)
    : std::runtime_error(format_message(code, detail)), code_(code), detail_(std::move(detail)) {}

}  // namespace nestery
