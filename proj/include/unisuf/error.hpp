#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace unisuf {

enum class ErrorCode {
    AuthFailure,
    DecryptFailure,
    BadSignature,
    InvalidCertificate,
    MalformedEncoding,
    KindMismatch,
    EmptyKeyList,
    MissingPart,
    PartSignatureInvalid,
    OuterSignatureInvalid,
    InnerSignatureInvalid,
    RoundExpired,
    MissingStartingMaterial,
    UnknownChannel,
    SecureChannelViolation,
    DelayBoundExceeded,
    PolicyViolation,
    ValidationFailure,
    UnexpectedMessage,
    ConfigError,
    MalformedTrace,
    UnknownDigest,
};

std::string_view error_name(ErrorCode code);

// Every failure raised by the library carries a code so callers can branch
// on the category and still print something readable.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string detail);

    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

[[noreturn]] void fail(ErrorCode code, std::string detail = {});

}  // namespace unisuf
