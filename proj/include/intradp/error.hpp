#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace intradp {

enum class Errc {
  CycleDetected,
  DanglingEdge,
  MissingBlockParams,
  UnreachableNode,
  InconsistentUnits,
  DuplicateId,
  UnknownOperator,
  UnknownNode,
  RangeOutOfBounds,
  InsufficientHalo,
  CoverageGap,
  ReplicaMismatch,
  ShapeMismatch,
  InfeasiblePlan,
  NoFeasibleIndividual,
  Deadlock,
  SchemaViolation,
  FileNotFound,
  EmptyTrace,
  HashMismatch,
  ProtocolViolation,
  ConnectionLost,
  Timeout,
  InvalidArgument,
};

constexpr std::string_view to_string(Errc e) {
  switch (e) {
    case Errc::CycleDetected: return "CycleDetected";
    case Errc::DanglingEdge: return "DanglingEdge";
    case Errc::MissingBlockParams: return "MissingBlockParams";
    case Errc::UnreachableNode: return "UnreachableNode";
    case Errc::InconsistentUnits: return "InconsistentUnits";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::UnknownOperator: return "UnknownOperator";
    case Errc::UnknownNode: return "UnknownNode";
    case Errc::RangeOutOfBounds: return "RangeOutOfBounds";
    case Errc::InsufficientHalo: return "InsufficientHalo";
    case Errc::CoverageGap: return "CoverageGap";
    case Errc::ReplicaMismatch: return "ReplicaMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::InfeasiblePlan: return "InfeasiblePlan";
    case Errc::NoFeasibleIndividual: return "NoFeasibleIndividual";
    case Errc::Deadlock: return "Deadlock";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::FileNotFound: return "FileNotFound";
    case Errc::EmptyTrace: return "EmptyTrace";
    case Errc::HashMismatch: return "HashMismatch";
    case Errc::ProtocolViolation: return "ProtocolViolation";
    case Errc::ConnectionLost: return "ConnectionLost";
    case Errc::Timeout: return "Timeout";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

// Every failure in the library surfaces as this exception; `code()` is the
// stable, testable part and `what()` carries the human diagnostic.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(to_string(code)) + ": " + msg), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace intradp
