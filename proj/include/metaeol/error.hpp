#ifndef METAEOL_ERROR_HPP
#define METAEOL_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace metaeol {

enum class ErrorKind {
  UnknownSet,
  UnknownTemplate,
  LayerOutOfRange,
  BackendUnavailable,
  ContextOverflow,
  NotSupported,
  DimensionMismatch,
  EmptyInput,
  NonFinite,
  ZeroVector,
  DegenerateInput,
  ParseError,
  MissingClass,
  BadMagic,
  UnsupportedVersion,
  TruncatedFile,
  DuplicateKey,
  DimMismatch,
  IoError,
  Usage,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnknownSet: return "UnknownSet";
    case ErrorKind::UnknownTemplate: return "UnknownTemplate";
    case ErrorKind::LayerOutOfRange: return "LayerOutOfRange";
    case ErrorKind::BackendUnavailable: return "BackendUnavailable";
    case ErrorKind::ContextOverflow: return "ContextOverflow";
    case ErrorKind::NotSupported: return "NotSupported";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::MissingClass: return "MissingClass";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::DuplicateKey: return "DuplicateKey";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::Usage: return "Usage";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Process exit codes for the command-line tool.
enum class ExitCode : int { Ok = 0, Usage = 1, Data = 2, Backend = 3 };

inline ExitCode exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
    case ErrorKind::UnknownSet:
    case ErrorKind::UnknownTemplate:
    case ErrorKind::LayerOutOfRange:
      return ExitCode::Usage;
    case ErrorKind::BackendUnavailable:
    case ErrorKind::NotSupported:
      return ExitCode::Backend;
    default:
      return ExitCode::Data;
  }
}

}  // namespace metaeol

#endif  // METAEOL_ERROR_HPP
