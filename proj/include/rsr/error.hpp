#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rsr {

enum class ErrorKind {
  OutOfAlphabet,
  DimensionMismatch,
  NonFinite,
  KTooLarge,
  TileTooWide,
  CorruptArtifact,
  HeterogeneousSiblings,
  BadMagic,
  UnsupportedVersion,
  TruncatedFile,
  FileNotFound,
  IoError,
  InvalidDepth,
  BadTokenId,
  InvalidConfig,
};

std::string_view kind_name(ErrorKind kind) noexcept;

// All module failures surface as rsr::Error; kind() is the machine-readable
// tag the CLI and HTTP layers report.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace rsr
