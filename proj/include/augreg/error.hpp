#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace augreg {

enum class ErrorKind {
  // input / design problems
  InvalidArgument,
  DimensionMismatch,
  MissingColumn,
  NonNumericCell,
  ReferenceMissingInValidation,
  ReferencePresentOutsideValidation,
  InvalidStudy,
  GroupTooSmall,
  InsufficientGroups,
  NonfiniteInput,
  // fitting problems
  RankDeficient,
  Degenerate,
  Separation,
  NoEvents,
  NotConverged,
  TooManyFailures,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::NonNumericCell: return "NonNumericCell";
    case ErrorKind::ReferenceMissingInValidation: return "ReferenceMissingInValidation";
    case ErrorKind::ReferencePresentOutsideValidation: return "ReferencePresentOutsideValidation";
    case ErrorKind::InvalidStudy: return "InvalidStudy";
    case ErrorKind::GroupTooSmall: return "GroupTooSmall";
    case ErrorKind::InsufficientGroups: return "InsufficientGroups";
    case ErrorKind::NonfiniteInput: return "NonfiniteInput";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::Degenerate: return "Degenerate";
    case ErrorKind::Separation: return "Separation";
    case ErrorKind::NoEvents: return "NoEvents";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::TooManyFailures: return "TooManyFailures";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// True for errors raised by a model fit rather than by malformed input.
constexpr bool is_fit_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::RankDeficient:
    case ErrorKind::Degenerate:
    case ErrorKind::Separation:
    case ErrorKind::NoEvents:
    case ErrorKind::NotConverged:
    case ErrorKind::TooManyFailures:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// Same error with a context prefix prepended to the message.
  Error annotated(const std::string& context) const {
    std::string what_str = what();
    const auto colon = what_str.find(": ");
    std::string detail = colon == std::string::npos ? what_str : what_str.substr(colon + 2);
    return Error(kind_, context + ": " + detail);
  }

 private:
  ErrorKind kind_;
};

}  // namespace augreg
