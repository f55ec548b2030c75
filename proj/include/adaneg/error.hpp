#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace adaneg {

enum class ErrorKind {
  BadMagic,
  DimensionMismatch,
  TruncatedFile,
  NonFiniteValue,
  ZeroVector,
  EmptyInput,
  ManifestInvalid,
  DegenerateProxy,
  EmptyPopulation,
  LengthMismatch,
  ConfigInvalid,
  InsufficientSamples,
  Io,
};

std::string_view to_string(ErrorKind kind);

// Every failure surfaced by the library carries one of the kinds above so
// callers (and tests) can branch on the category without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace adaneg
