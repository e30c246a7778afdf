#include "gimt/core/error.hpp"

namespace gimt {

std::string_view ErrcName(Errc code) {
  switch (code) {
    case Errc::kShape: return "shape";
    case Errc::kConfig: return "config";
    case Errc::kArgument: return "argument";
    case Errc::kMalformedAnnotation: return "malformed_annotation";
    case Errc::kDataset: return "dataset";
    case Errc::kValidation: return "validation";
    case Errc::kState: return "state";
    case Errc::kConflict: return "conflict";
    case Errc::kNotFound: return "not_found";
    case Errc::kProtocol: return "protocol";
    case Errc::kCapability: return "capability";
    case Errc::kInitialization: return "initialization";
    case Errc::kInference: return "inference";
    case Errc::kCatalog: return "catalog";
    case Errc::kMapping: return "mapping";
    case Errc::kIo: return "io";
  }
  return "unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(ErrcName(code)) + " error: " + message),
      code_(code) {}

}  // namespace gimt
