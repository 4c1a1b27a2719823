#include <array>

#include "unisuf/bytes.hpp"
#include "unisuf/error.hpp"
#include "unisuf/rng.hpp"

namespace unisuf {

std::string to_hex(ByteView data) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (auto b : data) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0f]);
    }
    return out;
}

namespace {
int nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}
}  // namespace

Bytes from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) fail(ErrorCode::MalformedEncoding, "odd-length hex string");
    Bytes out;
    out.reserve(hex.size() / 2);
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        int hi = nibble(hex[i]);
        int lo = nibble(hex[i + 1]);
        if (hi < 0 || lo < 0) fail(ErrorCode::MalformedEncoding, "invalid hex digit");
        out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
    }
    return out;
}

void append_u16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void append_u32(Bytes& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

void append_u64(Bytes& out, std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::string_view error_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::AuthFailure: return "AuthFailure";
        case ErrorCode::DecryptFailure: return "DecryptFailure";
        case ErrorCode::BadSignature: return "BadSignature";
        case ErrorCode::InvalidCertificate: return "InvalidCertificate";
        case ErrorCode::MalformedEncoding: return "MalformedEncoding";
        case ErrorCode::KindMismatch: return "KindMismatch";
        case ErrorCode::EmptyKeyList: return "EmptyKeyList";
        case ErrorCode::MissingPart: return "MissingPart";
        case ErrorCode::PartSignatureInvalid: return "PartSignatureInvalid";
        case ErrorCode::OuterSignatureInvalid: return "OuterSignatureInvalid";
        case ErrorCode::InnerSignatureInvalid: return "InnerSignatureInvalid";
        case ErrorCode::RoundExpired: return "RoundExpired";
        case ErrorCode::MissingStartingMaterial: return "MissingStartingMaterial";
        case ErrorCode::UnknownChannel: return "UnknownChannel";
        case ErrorCode::SecureChannelViolation: return "SecureChannelViolation";
        case ErrorCode::DelayBoundExceeded: return "DelayBoundExceeded";
        case ErrorCode::PolicyViolation: return "PolicyViolation";
        case ErrorCode::ValidationFailure: return "ValidationFailure";
        case ErrorCode::UnexpectedMessage: return "UnexpectedMessage";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::MalformedTrace: return "MalformedTrace";
        case ErrorCode::UnknownDigest: return "UnknownDigest";
    }
    return "Unknown";
}

namespace {
std::string format_error(ErrorCode code, const std::string& detail) {
    std::string msg(error_name(code));
    if (!detail.empty()) msg += ": " + detail;
    return msg;
}
}  // namespace

Error::Error(ErrorCode code, std::string detail)
    : std::runtime_error(format_error(code, detail)), code_(code), detail_(std::move(detail)) {}

void fail(ErrorCode code, std::string detail) { throw Error(code, std::move(detail)); }

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

std::uint64_t Rng::next_u64() { return engine_(); }

std::uint64_t Rng::uniform(std::uint64_t lo, std::uint64_t hi) {
    if (hi <= lo) return lo;
    const std::uint64_t span = hi - lo + 1;
    if (span == 0) return lo + next_u64();  // full 64-bit range
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return lo + x % span;
}

Bytes Rng::bytes(std::size_t n) {
    Bytes out;
    out.reserve(n + 8);
    while (out.size() < n) append_u64(out, next_u64());
    out.resize(n);
    return out;
}

Rng Rng::fork(std::string_view label) const {
    // FNV-1a over the label, mixed with the parent seed via splitmix64.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : label) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    std::uint64_t z = seed_ ^ h;
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return Rng(z);
}

}  // namespace unisuf
