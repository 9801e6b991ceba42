#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace blo {

enum class ErrorKind {
  NonFinite,
  DimensionMismatch,
  NonSquare,
  AsymmetricBeyondTol,
  NoConvergence,
  NonPositiveDamping,
  UnboundedInner,
  SeriesDivergence,
  NotStationary,
  DivergenceDetected,
  StepCapReached,
  NonFiniteLoss,
  ZeroDirection,
  ShapeMismatch,
  OuterDimTooLarge,
  BadMagic,
  TruncatedFile,
  UnsupportedElementType,
  IoError,
  InvalidConfig,
  ParseError,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so callers can branch
// without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace blo
