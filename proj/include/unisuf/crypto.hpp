#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include "unisuf/bytes.hpp"
#include "unisuf/rng.hpp"
#include "unisuf/term.hpp"

namespace unisuf {

enum class SymKeyKind : std::uint8_t {
    Software = 1,
    Dkm = 2,
    Ikm = 3,
    MkmSecurityAccess = 4,
    MkmSoftware = 5,
    SecurityAccess = 6,
};

std::string_view sym_key_kind_name(SymKeyKind k);

struct SymKey {
    SymKeyKind kind = SymKeyKind::Software;
    Bytes bytes;

    // Atom payload is the kind byte followed by the key bytes, so a wrapped
    // key remembers what it is for.
    Term to_term() const;
    static SymKey from_term(const Term& t);
    friend bool operator==(const SymKey&, const SymKey&) = default;
};

struct PublicKey {
    Bytes bytes;
    Term to_term() const { return Term::atom(AtomKind::PublicKey, bytes); }
    static PublicKey from_term(const Term& t);
    friend bool operator==(const PublicKey&, const PublicKey&) = default;
};

struct PrivateKey {
    Bytes bytes;
    Term to_term() const { return Term::atom(AtomKind::PrivateKey, bytes); }
    friend bool operator==(const PrivateKey&, const PrivateKey&) = default;
};

struct KeyPair {
    PrivateKey priv;
    PublicKey pub;
};

struct Digest {
    Bytes bytes;
    Term to_term() const { return Term::atom(AtomKind::Digest, bytes); }
    std::string hex() const { return to_hex(bytes); }
    friend bool operator==(const Digest&, const Digest&) = default;
    friend auto operator<=>(const Digest&, const Digest&) = default;
};

struct CipherText {
    Scheme scheme = Scheme::Sym;
    Bytes bytes;
    Term to_term() const { return Term::cipher(scheme, bytes); }
    static CipherText from_term(const Term& t);
    friend bool operator==(const CipherText&, const CipherText&) = default;
};

struct CryptoConfig {
    std::string backend = "sodium";  // "sodium" or "mock"
    std::size_t digest_bytes = 32;
    std::size_t sym_key_bytes = 32;
};

class CryptoBackend {
public:
    virtual ~CryptoBackend() = default;

    virtual std::string name() const = 0;
    virtual bool deterministic_signatures() const = 0;
    std::size_t digest_bytes() const { return config_.digest_bytes; }
    std::size_t sym_key_bytes() const { return config_.sym_key_bytes; }

    virtual Digest hash(ByteView message) const = 0;

    SymKey generate_sym_key(SymKeyKind kind, Rng& rng) const;
    virtual KeyPair generate_keypair(Rng& rng) const = 0;
    virtual PublicKey public_from_private(const PrivateKey& sk) const = 0;

    virtual CipherText sym_encrypt(ByteView message, const SymKey& key, Rng& rng) const = 0;
    virtual Bytes sym_decrypt(const CipherText& ct, const SymKey& key) const = 0;
    virtual CipherText auth_encrypt(ByteView message, const SymKey& key, Rng& rng) const = 0;
    virtual Bytes auth_decrypt(const CipherText& ct, const SymKey& key) const = 0;
    virtual CipherText asym_encrypt(ByteView message, const PublicKey& pk, Rng& rng) const = 0;
    virtual Bytes asym_decrypt(const CipherText& ct, const PrivateKey& sk) const = 0;

    virtual Bytes sign_hash(const Digest& digest, const PrivateKey& sk) const = 0;
    virtual bool verify_hash(const Digest& digest, ByteView signature, const PublicKey& pk) const = 0;

    // ECU security-access response for a challenge under the unlock key.
    virtual Bytes challenge_response(ByteView challenge, const SymKey& key) const = 0;

protected:
    explicit CryptoBackend(CryptoConfig config) : config_(std::move(config)) {}
    void require_scheme(const CipherText& ct, Scheme expected) const;

    CryptoConfig config_;
};

std::unique_ptr<CryptoBackend> make_backend(const CryptoConfig& config);

Digest term_digest(const Term& t, const CryptoBackend& crypto);

// Two-step signing: the signature is produced over Hash(canonical(payload))
// by whoever holds the key, and attached to the payload later.
Bytes sign_term(const Term& payload, const PrivateKey& sk, const CryptoBackend& crypto);
Term assemble_signed(Term payload, Bytes signature);
const Term& verify_signed(const Term& signed_term, const PublicKey& pk, const CryptoBackend& crypto);
bool signature_valid(const Term& signed_term, const PublicKey& pk, const CryptoBackend& crypto);

struct Certificate {
    std::string holder_id;
    PublicKey holder_public;
    Bytes issuer_signature;

    Term body() const;
    Term to_term() const;
    static Certificate from_term(const Term& t);
    friend bool operator==(const Certificate&, const Certificate&) = default;
};

Certificate issue_certificate(std::string holder_id, const PublicKey& holder_public, const PrivateKey& root_sk,
                              const CryptoBackend& crypto);
PublicKey validate_certificate(const Certificate& cert, const PublicKey& root_pk, const CryptoBackend& crypto);

}  // namespace unisuf
