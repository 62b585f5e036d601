#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cadseq {

enum class ErrorCode {
  OutOfRange,
  BadLevel,
  SyntaxError,
  GrammarError,
  LengthError,
  OpenLoop,
  DegenerateLoop,
  EmptyResult,
  InvalidModel,
  EmptyCloud,
  FullyMaskedRow,
  ShapeMismatch,
  NonFinite,
  InvalidPrediction,
  BadStep,
  LengthMismatch,
  EmptySet,
  ConfigError,
  IoError,
  CorruptCheckpoint,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above so that
// callers (the CLI, metric counters) can branch on the kind without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cadseq
