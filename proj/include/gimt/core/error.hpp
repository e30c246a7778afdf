#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gimt {

enum class Errc {
  kShape,
  kConfig,
  kArgument,
  kMalformedAnnotation,
  kDataset,
  kValidation,
  kState,
  kConflict,
  kNotFound,
  kProtocol,
  kCapability,
  kInitialization,
  kInference,
  kCatalog,
  kMapping,
  kIo,
};

std::string_view ErrcName(Errc code);

// Every failure surfaced by the library carries a category so callers (the
// service layer in particular) can map it onto a wire-level error code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace gimt
