#pragma once

#include <stdexcept>
#include <string>

namespace tfcount {

enum class ErrorCode {
  kMalformedRle,
  kMalformedTensor,
  kDimensionMismatch,
  kEmptyInput,
  kNoComponent,
  kNoReference,
  kUndefinedScore,
  kInvalidArgument,
  kUnknownFeature,
  kUnsupported,
  kBackendUnreachable,
  kBackendFailure,
  kIo,
};

const char* to_string(ErrorCode code);

// Single exception type for the library; callers switch on code() where the
// distinction matters (CLI exit codes, HTTP status mapping).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tfcount
