#include "adaneg/error.hpp"

namespace adaneg {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::ManifestInvalid: return "ManifestInvalid";
    case ErrorKind::DegenerateProxy: return "DegenerateProxy";
    case ErrorKind::EmptyPopulation: return "EmptyPopulation";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::InsufficientSamples: return "InsufficientSamples";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace adaneg
