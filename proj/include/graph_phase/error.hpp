#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace graph_phase {

enum class ErrorKind {
  // graph construction
  DisconnectedGraph,
  NonPositiveWeight,
  SelfLoop,
  IndexOutOfRange,
  DuplicateEdge,
  // field / operator preconditions
  DimensionMismatch,
  NegativeTime,
  InvalidParameter,
  DomainViolation,
  MassOutOfRange,
  InconsistentInputs,
  LambdaIsOne,
  BoundaryState,
  GraphTooLarge,
  RowNotInPi,
  InfeasibleMasses,
  TauExceedsEpsilon,
  // io
  ParseError,
  MissingVertex,
  IoError,
  // numerical failures
  EigensolverFailure,
  NoConvergence,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorKind::NonPositiveWeight: return "NonPositiveWeight";
    case ErrorKind::SelfLoop: return "SelfLoop";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::DuplicateEdge: return "DuplicateEdge";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NegativeTime: return "NegativeTime";
    case ErrorKind::InvalidParameter: return "InvalidParameter";
    case ErrorKind::DomainViolation: return "DomainViolation";
    case ErrorKind::MassOutOfRange: return "MassOutOfRange";
    case ErrorKind::InconsistentInputs: return "InconsistentInputs";
    case ErrorKind::LambdaIsOne: return "LambdaIsOne";
    case ErrorKind::BoundaryState: return "BoundaryState";
    case ErrorKind::GraphTooLarge: return "GraphTooLarge";
    case ErrorKind::RowNotInPi: return "RowNotInPi";
    case ErrorKind::InfeasibleMasses: return "InfeasibleMasses";
    case ErrorKind::TauExceedsEpsilon: return "TauExceedsEpsilon";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::MissingVertex: return "MissingVertex";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::EigensolverFailure: return "EigensolverFailure";
    case ErrorKind::NoConvergence: return "NoConvergence";
  }
  return "Unknown";
}

/// Numerical failures are distinguished from input validation failures so
/// the CLI can map them to different exit codes.
constexpr bool is_numerical(ErrorKind kind) {
  return kind == ErrorKind::EigensolverFailure || kind == ErrorKind::NoConvergence;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace graph_phase
