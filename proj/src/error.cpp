#include "rsr/error.hpp"

namespace rsr {

std::string_view kind_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::OutOfAlphabet: return "OutOfAlphabet";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::KTooLarge: return "KTooLarge";
    case ErrorKind::TileTooWide: return "TileTooWide";
    case ErrorKind::CorruptArtifact: return "CorruptArtifact";
    case ErrorKind::HeterogeneousSiblings: return "HeterogeneousSiblings";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::FileNotFound: return "FileNotFound";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::InvalidDepth: return "InvalidDepth";
    case ErrorKind::BadTokenId: return "BadTokenId";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

}  // namespace rsr
