#pragma once

#include <stdexcept>
#include <string>

namespace kinit {

// Every recoverable failure the library reports. Validation-style codes map
// to CLI exit code 2; anything else escaping to main is an internal error (1).
enum class Errc {
  MalformedContainer,
  UnsupportedEncoding,
  EmptyAudio,
  IoFailure,
  ClipTooShort,
  DegenerateFilter,
  BinMismatch,
  EmptyDataset,
  InsufficientData,
  MalformedRow,
  DegenerateAgreement,
  ShapeMismatch,
  ShapeTooSmall,
  EmptyTrainingSet,
  EmptyTestSet,
  BadArgument,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::MalformedContainer: return "MalformedContainer";
    case Errc::UnsupportedEncoding: return "UnsupportedEncoding";
    case Errc::EmptyAudio: return "EmptyAudio";
    case Errc::IoFailure: return "IoFailure";
    case Errc::ClipTooShort: return "ClipTooShort";
    case Errc::DegenerateFilter: return "DegenerateFilter";
    case Errc::BinMismatch: return "BinMismatch";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::MalformedRow: return "MalformedRow";
    case Errc::DegenerateAgreement: return "DegenerateAgreement";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::ShapeTooSmall: return "ShapeTooSmall";
    case Errc::EmptyTrainingSet: return "EmptyTrainingSet";
    case Errc::EmptyTestSet: return "EmptyTestSet";
    case Errc::BadArgument: return "BadArgument";
  }
  return "UnknownError";
}

class KinitError : public std::runtime_error {
 public:
  KinitError(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) {
  throw KinitError(code, msg);
}

inline void require(bool cond, Errc code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

}  // namespace kinit
