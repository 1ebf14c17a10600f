#include "qsd/error.hpp"

namespace qsd {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedWav: return "MalformedWav";
    case ErrorKind::UnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorKind::SignalTooShort: return "SignalTooShort";
    case ErrorKind::TooFewFrames: return "TooFewFrames";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::WindowTooSmall: return "WindowTooSmall";
    case ErrorKind::SingularCovariance: return "SingularCovariance";
    case ErrorKind::NoSegments: return "NoSegments";
    case ErrorKind::InvalidArch: return "InvalidArch";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::EmptyData: return "EmptyData";
    case ErrorKind::EmptySegment: return "EmptySegment";
    case ErrorKind::EmptyCluster: return "EmptyCluster";
    case ErrorKind::ZeroNormEmbedding: return "ZeroNormEmbedding";
    case ErrorKind::EmptySet: return "EmptySet";
    case ErrorKind::TooManyClients: return "TooManyClients";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::BadGroupSize: return "BadGroupSize";
    case ErrorKind::ArchMismatch: return "ArchMismatch";
    case ErrorKind::UnsortedInput: return "UnsortedInput";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

}  // namespace qsd
