#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stylesearch {

enum class ErrorCode {
    io,
    parse,
    validation,
    dangling_reference,
    dimension_mismatch,
    duplicate_id,
    not_found,
    invalid_argument,
    all_oov,
    degenerate,
};

std::string_view error_code_name(ErrorCode code);

/// Library-wide exception. `code` is machine readable; what() is the
/// human message and names the offending id or path when there is one.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace stylesearch
