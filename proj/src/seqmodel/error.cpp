#include "cadseq/error.hpp"

namespace cadseq {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::BadLevel: return "BadLevel";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::GrammarError: return "GrammarError";
    case ErrorCode::LengthError: return "LengthError";
    case ErrorCode::OpenLoop: return "OpenLoop";
    case ErrorCode::DegenerateLoop: return "DegenerateLoop";
    case ErrorCode::EmptyResult: return "EmptyResult";
    case ErrorCode::InvalidModel: return "InvalidModel";
    case ErrorCode::EmptyCloud: return "EmptyCloud";
    case ErrorCode::FullyMaskedRow: return "FullyMaskedRow";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::InvalidPrediction: return "InvalidPrediction";
    case ErrorCode::BadStep: return "BadStep";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
  }
  return "Unknown";
}

}  // namespace cadseq
