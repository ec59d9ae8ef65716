#pragma once

#include <stdexcept>
#include <string>

namespace surfmatch {

enum class ErrorCode {
    kInvalidArgument,
    kInsufficientPoints,
    kDegenerateGeometry,
    kEmptyResult,
    kNonFinite,
    kIo,
    kFormat,
    kVersionMismatch,
    kSplitLeakage,
    kUndefined,
};

const char *error_code_name(ErrorCode code);

/// Single exception type for the library; `code()` keeps failures
/// machine-readable for the CLI error JSON.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string &message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

}  // namespace surfmatch
