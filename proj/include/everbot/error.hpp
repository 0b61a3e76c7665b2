#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace everbot {

enum class ErrorCode {
  InvalidArgument,
  InfeasibleBend,
  AntiparallelHeadings,
  EmptyInput,
  EmptyCloud,
  LengthMismatch,
  DegenerateSegment,
  WindowTooLong,
  MisalignedSeries,
  AddressCollision,
  TimeOutOfRange,
  SchemaVersionMismatch,
  ParseError,
  TooFewPoints,
  MissingBands,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InfeasibleBend: return "InfeasibleBend";
    case ErrorCode::AntiparallelHeadings: return "AntiparallelHeadings";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptyCloud: return "EmptyCloud";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DegenerateSegment: return "DegenerateSegment";
    case ErrorCode::WindowTooLong: return "WindowTooLong";
    case ErrorCode::MisalignedSeries: return "MisalignedSeries";
    case ErrorCode::AddressCollision: return "AddressCollision";
    case ErrorCode::TimeOutOfRange: return "TimeOutOfRange";
    case ErrorCode::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::MissingBands: return "MissingBands";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure in the library is reported through this type. `indices`
/// carries the offending segment, band list or line number when one applies.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::vector<std::size_t> indices = {})
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        indices_(std::move(indices)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::vector<std::size_t>& indices() const noexcept { return indices_; }

  std::optional<std::size_t> index() const {
    if (indices_.empty()) return std::nullopt;
    return indices_.front();
  }

 private:
  ErrorCode code_;
  std::vector<std::size_t> indices_;
};

}  // namespace everbot
