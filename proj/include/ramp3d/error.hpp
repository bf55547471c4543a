#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ramp3d {

enum class ErrorCode {
  kInvalidArgument,
  kPickupInaccessible,
  kSlotFull,
  kSnapOutOfTolerance,
  kPickupEqualsSupport,
  kUnknownEntity,
  kCapacityInfeasible,
  kPlacementExhausted,
  kDeadEnd,
  kEntityAbsentFromCloud,
  kEmptyMask,
  kBothEmpty,
  kEmptyAfterFilter,
  kOutOfBounds,
  kInvalidDepth,
  kDimensionMismatch,
  kNoCandidates,
  kEmptyBucket,
  kStructureMismatch,
  kProtocolViolation,
  kSchemaMismatch,
  kCorruptSample,
  kIoFailure,
  kProviderFailure,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kPickupInaccessible: return "pickup-inaccessible";
    case ErrorCode::kSlotFull: return "slot-full";
    case ErrorCode::kSnapOutOfTolerance: return "snap-out-of-tolerance";
    case ErrorCode::kPickupEqualsSupport: return "pickup-equals-support";
    case ErrorCode::kUnknownEntity: return "unknown-entity";
    case ErrorCode::kCapacityInfeasible: return "capacity-infeasible";
    case ErrorCode::kPlacementExhausted: return "placement-exhausted";
    case ErrorCode::kDeadEnd: return "dead-end";
    case ErrorCode::kEntityAbsentFromCloud: return "entity-absent-from-cloud";
    case ErrorCode::kEmptyMask: return "empty-mask";
    case ErrorCode::kBothEmpty: return "both-empty";
    case ErrorCode::kEmptyAfterFilter: return "empty-after-filter";
    case ErrorCode::kOutOfBounds: return "out-of-bounds";
    case ErrorCode::kInvalidDepth: return "invalid-depth";
    case ErrorCode::kDimensionMismatch: return "dimension-mismatch";
    case ErrorCode::kNoCandidates: return "no-candidates";
    case ErrorCode::kEmptyBucket: return "empty-bucket";
    case ErrorCode::kStructureMismatch: return "structure-mismatch";
    case ErrorCode::kProtocolViolation: return "protocol-violation";
    case ErrorCode::kSchemaMismatch: return "schema-mismatch";
    case ErrorCode::kCorruptSample: return "corrupt-sample";
    case ErrorCode::kIoFailure: return "io-failure";
    case ErrorCode::kProviderFailure: return "provider-failure";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers can branch on the class without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ramp3d
