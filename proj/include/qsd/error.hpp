#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qsd {

enum class ErrorKind {
  MalformedWav,
  UnsupportedEncoding,
  SignalTooShort,
  TooFewFrames,
  DimensionMismatch,
  WindowTooSmall,
  SingularCovariance,
  NoSegments,
  InvalidArch,
  LabelOutOfRange,
  EmptyData,
  EmptySegment,
  EmptyCluster,
  ZeroNormEmbedding,
  EmptySet,
  TooManyClients,
  InsufficientData,
  BadGroupSize,
  ArchMismatch,
  UnsortedInput,
  EmptyCorpus,
  LengthMismatch,
  InvalidSpec,
  InvalidConfig,
  IoFailure,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so callers (and tests)
// can dispatch on it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised by the pipeline; prefixes the failing stage name.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("[" + stage + "] " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace qsd
