#include "unisuf/crypto.hpp"

#include <sodium.h>

#include <cstring>

#include "unisuf/error.hpp"

namespace unisuf {

std::string_view sym_key_kind_name(SymKeyKind k) {
    switch (k) {
        case SymKeyKind::Software: return "Software";
        case SymKeyKind::Dkm: return "DKM";
        case SymKeyKind::Ikm: return "IKM";
        case SymKeyKind::MkmSecurityAccess: return "MkmSecurityAccess";
        case SymKeyKind::MkmSoftware: return "MkmSoftware";
        case SymKeyKind::SecurityAccess: return "SecurityAccess";
    }
    return "?";
}

Term SymKey::to_term() const {
    Bytes b{static_cast<std::uint8_t>(kind)};
    append(b, bytes);
    return Term::atom(AtomKind::SymKey, std::move(b));
}

SymKey SymKey::from_term(const Term& t) {
    if (!t.is_atom(AtomKind::SymKey) || t.bytes().empty()) fail(ErrorCode::MalformedEncoding, "expected symmetric key");
    auto k = t.bytes().front();
    if (k < 1 || k > 6) fail(ErrorCode::MalformedEncoding, "unknown symmetric key kind");
    return SymKey{static_cast<SymKeyKind>(k), Bytes(t.bytes().begin() + 1, t.bytes().end())};
}

PublicKey PublicKey::from_term(const Term& t) {
    if (!t.is_atom(AtomKind::PublicKey)) fail(ErrorCode::MalformedEncoding, "expected public key");
    return PublicKey{t.bytes()};
}

CipherText CipherText::from_term(const Term& t) {
    if (!t.is_cipher()) fail(ErrorCode::MalformedEncoding, "expected ciphertext");
    return CipherText{t.scheme(), t.bytes()};
}

SymKey CryptoBackend::generate_sym_key(SymKeyKind kind, Rng& rng) const {
    return SymKey{kind, rng.bytes(config_.sym_key_bytes)};
}

void CryptoBackend::require_scheme(const CipherText& ct, Scheme expected) const {
    if (ct.scheme != expected) fail(ErrorCode::DecryptFailure, "ciphertext scheme mismatch");
}

namespace {

Digest blake2b(ByteView message, std::size_t out_len) {
    Digest d{Bytes(out_len)};
    crypto_generichash(d.bytes.data(), out_len, message.data(), message.size(), nullptr, 0);
    return d;
}

void ensure_sodium() {
    static const bool ready = [] { return sodium_init() >= 0; }();
    if (!ready) fail(ErrorCode::ConfigError, "libsodium failed to initialise");
}

// Real backend: XChaCha20 (+Poly1305), X25519 box, Ed25519, BLAKE2b.
class SodiumBackend final : public CryptoBackend {
public:
    explicit SodiumBackend(CryptoConfig config) : CryptoBackend(std::move(config)) {
        ensure_sodium();
        if (config_.sym_key_bytes != crypto_stream_xchacha20_KEYBYTES)
            fail(ErrorCode::ConfigError, "sodium backend requires 32-byte symmetric keys");
    }

    std::string name() const override { return "sodium"; }
    bool deterministic_signatures() const override { return true; }

    Digest hash(ByteView message) const override { return blake2b(message, config_.digest_bytes); }

    KeyPair generate_keypair(Rng& rng) const override {
        PrivateKey sk{rng.bytes(crypto_sign_SEEDBYTES)};
        return KeyPair{sk, public_from_private(sk)};
    }

    // A private key is a 32-byte seed. The public half concatenates the
    // Ed25519 verification key and the X25519 encryption key derived from it.
    PublicKey public_from_private(const PrivateKey& sk) const override {
        check_seed(sk);
        Bytes pub(crypto_sign_PUBLICKEYBYTES + crypto_box_PUBLICKEYBYTES);
        unsigned char sign_sk[crypto_sign_SECRETKEYBYTES];
        crypto_sign_seed_keypair(pub.data(), sign_sk, sk.bytes.data());
        unsigned char box_sk[crypto_box_SECRETKEYBYTES];
        crypto_box_seed_keypair(pub.data() + crypto_sign_PUBLICKEYBYTES, box_sk, sk.bytes.data());
        sodium_memzero(sign_sk, sizeof sign_sk);
        sodium_memzero(box_sk, sizeof box_sk);
        return PublicKey{std::move(pub)};
    }

    CipherText sym_encrypt(ByteView message, const SymKey& key, Rng& rng) const override {
        check_key(key);
        Bytes out = rng.bytes(crypto_stream_xchacha20_NONCEBYTES);
        out.resize(out.size() + message.size());
        crypto_stream_xchacha20_xor(out.data() + crypto_stream_xchacha20_NONCEBYTES, message.data(), message.size(),
                                    out.data(), key.bytes.data());
        return CipherText{Scheme::Sym, std::move(out)};
    }

    Bytes sym_decrypt(const CipherText& ct, const SymKey& key) const override {
        require_scheme(ct, Scheme::Sym);
        check_key(key);
        if (ct.bytes.size() < crypto_stream_xchacha20_NONCEBYTES) fail(ErrorCode::DecryptFailure, "short ciphertext");
        Bytes out(ct.bytes.size() - crypto_stream_xchacha20_NONCEBYTES);
        crypto_stream_xchacha20_xor(out.data(), ct.bytes.data() + crypto_stream_xchacha20_NONCEBYTES, out.size(),
                                    ct.bytes.data(), key.bytes.data());
        return out;
    }

    CipherText auth_encrypt(ByteView message, const SymKey& key, Rng& rng) const override {
        check_key(key);
        constexpr auto nlen = crypto_aead_xchacha20poly1305_ietf_NPUBBYTES;
        Bytes out = rng.bytes(nlen);
        out.resize(nlen + message.size() + crypto_aead_xchacha20poly1305_ietf_ABYTES);
        unsigned long long clen = 0;
        crypto_aead_xchacha20poly1305_ietf_encrypt(out.data() + nlen, &clen, message.data(), message.size(), nullptr, 0,
                                                   nullptr, out.data(), key.bytes.data());
        out.resize(nlen + clen);
        return CipherText{Scheme::AuthSym, std::move(out)};
    }

    Bytes auth_decrypt(const CipherText& ct, const SymKey& key) const override {
        if (ct.scheme != Scheme::AuthSym) fail(ErrorCode::AuthFailure, "ciphertext scheme mismatch");
        check_key(key);
        constexpr auto nlen = crypto_aead_xchacha20poly1305_ietf_NPUBBYTES;
        constexpr auto alen = crypto_aead_xchacha20poly1305_ietf_ABYTES;
        if (ct.bytes.size() < nlen + alen) fail(ErrorCode::AuthFailure, "short ciphertext");
        Bytes out(ct.bytes.size() - nlen - alen);
        unsigned long long mlen = 0;
        if (crypto_aead_xchacha20poly1305_ietf_decrypt(out.data(), &mlen, nullptr, ct.bytes.data() + nlen,
                                                       ct.bytes.size() - nlen, nullptr, 0, ct.bytes.data(),
                                                       key.bytes.data()) != 0)
            fail(ErrorCode::AuthFailure, "authentication tag mismatch");
        out.resize(mlen);
        return out;
    }

    CipherText asym_encrypt(ByteView message, const PublicKey& pk, Rng& rng) const override {
        check_public(pk);
        const unsigned char* recipient = pk.bytes.data() + crypto_sign_PUBLICKEYBYTES;
        Bytes eph_seed = rng.bytes(crypto_box_SEEDBYTES);
        unsigned char eph_sk[crypto_box_SECRETKEYBYTES];
        Bytes out(crypto_box_PUBLICKEYBYTES);
        crypto_box_seed_keypair(out.data(), eph_sk, eph_seed.data());
        append(out, rng.bytes(crypto_box_NONCEBYTES));
        const std::size_t head = out.size();
        out.resize(head + message.size() + crypto_box_MACBYTES);
        const unsigned char* nonce = out.data() + crypto_box_PUBLICKEYBYTES;
        if (crypto_box_easy(out.data() + head, message.data(), message.size(), nonce, recipient, eph_sk) != 0)
            fail(ErrorCode::DecryptFailure, "recipient key rejected");
        sodium_memzero(eph_sk, sizeof eph_sk);
        return CipherText{Scheme::Asym, std::move(out)};
    }

    Bytes asym_decrypt(const CipherText& ct, const PrivateKey& sk) const override {
        require_scheme(ct, Scheme::Asym);
        check_seed(sk);
        constexpr std::size_t head = crypto_box_PUBLICKEYBYTES + crypto_box_NONCEBYTES;
        if (ct.bytes.size() < head + crypto_box_MACBYTES) fail(ErrorCode::DecryptFailure, "short ciphertext");
        unsigned char box_pk[crypto_box_PUBLICKEYBYTES];
        unsigned char box_sk[crypto_box_SECRETKEYBYTES];
        crypto_box_seed_keypair(box_pk, box_sk, sk.bytes.data());
        Bytes out(ct.bytes.size() - head - crypto_box_MACBYTES);
        int rc = crypto_box_open_easy(out.data(), ct.bytes.data() + head, ct.bytes.size() - head,
                                      ct.bytes.data() + crypto_box_PUBLICKEYBYTES, ct.bytes.data(), box_sk);
        sodium_memzero(box_sk, sizeof box_sk);
        if (rc != 0) fail(ErrorCode::DecryptFailure, "asymmetric decryption failed");
        return out;
    }

    Bytes sign_hash(const Digest& digest, const PrivateKey& sk) const override {
        check_seed(sk);
        unsigned char pk[crypto_sign_PUBLICKEYBYTES];
        unsigned char sign_sk[crypto_sign_SECRETKEYBYTES];
        crypto_sign_seed_keypair(pk, sign_sk, sk.bytes.data());
        Bytes sig(crypto_sign_BYTES);
        crypto_sign_detached(sig.data(), nullptr, digest.bytes.data(), digest.bytes.size(), sign_sk);
        sodium_memzero(sign_sk, sizeof sign_sk);
        return sig;
    }

    bool verify_hash(const Digest& digest, ByteView signature, const PublicKey& pk) const override {
        if (signature.size() != crypto_sign_BYTES || pk.bytes.size() != public_size()) return false;
        return crypto_sign_verify_detached(signature.data(), digest.bytes.data(), digest.bytes.size(),
                                           pk.bytes.data()) == 0;
    }

    Bytes challenge_response(ByteView challenge, const SymKey& key) const override {
        check_key(key);
        Bytes mac(crypto_auth_BYTES);
        crypto_auth(mac.data(), challenge.data(), challenge.size(), key.bytes.data());
        return mac;
    }

private:
    static constexpr std::size_t public_size() { return crypto_sign_PUBLICKEYBYTES + crypto_box_PUBLICKEYBYTES; }

    static void check_seed(const PrivateKey& sk) {
        if (sk.bytes.size() != crypto_sign_SEEDBYTES) fail(ErrorCode::DecryptFailure, "malformed private key");
    }
    static void check_public(const PublicKey& pk) {
        if (pk.bytes.size() != public_size()) fail(ErrorCode::DecryptFailure, "malformed public key");
    }
    void check_key(const SymKey& key) const {
        if (key.bytes.size() != config_.sym_key_bytes) fail(ErrorCode::DecryptFailure, "symmetric key has wrong size");
    }
};

// Deterministic stand-in built only from the hash: XOR keystreams and keyed
// digests as tags. It keeps the functional contracts (round trips, tag
// checks, key mismatch detection) but a public key suffices to forge its
// signatures, so it is for reproducible tests, never for security claims.
class MockBackend final : public CryptoBackend {
public:
    explicit MockBackend(CryptoConfig config) : CryptoBackend(std::move(config)) {
        ensure_sodium();
        if (config_.sym_key_bytes == 0) fail(ErrorCode::ConfigError, "symmetric key size must be positive");
    }

    std::string name() const override { return "mock"; }
    bool deterministic_signatures() const override { return true; }

    Digest hash(ByteView message) const override { return blake2b(message, config_.digest_bytes); }

    KeyPair generate_keypair(Rng& rng) const override {
        PrivateKey sk{rng.bytes(32)};
        return KeyPair{sk, public_from_private(sk)};
    }

    PublicKey public_from_private(const PrivateKey& sk) const override {
        return PublicKey{keyed("mock-pk", sk.bytes, {}, 32)};
    }

    CipherText sym_encrypt(ByteView message, const SymKey& key, Rng& rng) const override {
        Bytes nonce = rng.bytes(kNonce);
        Bytes out = nonce;
        append(out, xor_stream(key.bytes, nonce, message));
        return CipherText{Scheme::Sym, std::move(out)};
    }

    Bytes sym_decrypt(const CipherText& ct, const SymKey& key) const override {
        require_scheme(ct, Scheme::Sym);
        if (ct.bytes.size() < kNonce) fail(ErrorCode::DecryptFailure, "short ciphertext");
        ByteView nonce(ct.bytes.data(), kNonce);
        return xor_stream(key.bytes, nonce, ByteView(ct.bytes).subspan(kNonce));
    }

    CipherText auth_encrypt(ByteView message, const SymKey& key, Rng& rng) const override {
        Bytes nonce = rng.bytes(kNonce);
        Bytes out = nonce;
        append(out, xor_stream(key.bytes, nonce, message));
        append(out, keyed("mock-tag", key.bytes, out, kTag));
        return CipherText{Scheme::AuthSym, std::move(out)};
    }

    Bytes auth_decrypt(const CipherText& ct, const SymKey& key) const override {
        if (ct.scheme != Scheme::AuthSym) fail(ErrorCode::AuthFailure, "ciphertext scheme mismatch");
        if (ct.bytes.size() < kNonce + kTag) fail(ErrorCode::AuthFailure, "short ciphertext");
        ByteView body(ct.bytes.data(), ct.bytes.size() - kTag);
        ByteView tag = ByteView(ct.bytes).subspan(ct.bytes.size() - kTag);
        Bytes expect = keyed("mock-tag", key.bytes, body, kTag);
        if (!std::equal(expect.begin(), expect.end(), tag.begin())) fail(ErrorCode::AuthFailure, "tag mismatch");
        return xor_stream(key.bytes, body.first(kNonce), body.subspan(kNonce));
    }

    CipherText asym_encrypt(ByteView message, const PublicKey& pk, Rng& rng) const override {
        Bytes nonce = rng.bytes(kNonce);
        Bytes out = nonce;
        append(out, xor_stream(pk.bytes, nonce, message));
        append(out, keyed("mock-asym-tag", pk.bytes, out, kTag));
        return CipherText{Scheme::Asym, std::move(out)};
    }

    Bytes asym_decrypt(const CipherText& ct, const PrivateKey& sk) const override {
        require_scheme(ct, Scheme::Asym);
        if (ct.bytes.size() < kNonce + kTag) fail(ErrorCode::DecryptFailure, "short ciphertext");
        PublicKey pk = public_from_private(sk);
        ByteView body(ct.bytes.data(), ct.bytes.size() - kTag);
        ByteView tag = ByteView(ct.bytes).subspan(ct.bytes.size() - kTag);
        Bytes expect = keyed("mock-asym-tag", pk.bytes, body, kTag);
        if (!std::equal(expect.begin(), expect.end(), tag.begin()))
            fail(ErrorCode::DecryptFailure, "asymmetric tag mismatch");
        return xor_stream(pk.bytes, body.first(kNonce), body.subspan(kNonce));
    }

    Bytes sign_hash(const Digest& digest, const PrivateKey& sk) const override {
        return keyed("mock-sig", public_from_private(sk).bytes, digest.bytes, 32);
    }

    bool verify_hash(const Digest& digest, ByteView signature, const PublicKey& pk) const override {
        Bytes expect = keyed("mock-sig", pk.bytes, digest.bytes, 32);
        return signature.size() == expect.size() && std::equal(expect.begin(), expect.end(), signature.begin());
    }

    Bytes challenge_response(ByteView challenge, const SymKey& key) const override {
        Bytes m(challenge.begin(), challenge.end());
        append(m, key.bytes);
        return hash(m).bytes;
    }

private:
    static constexpr std::size_t kNonce = 16;
    static constexpr std::size_t kTag = 16;

    static Bytes keyed(std::string_view domain, ByteView key, ByteView data, std::size_t out_len) {
        Bytes m = to_bytes(domain);
        append_u32(m, static_cast<std::uint32_t>(key.size()));
        append(m, key);
        append(m, data);
        return blake2b(m, out_len).bytes;
    }

    static Bytes xor_stream(ByteView key, ByteView nonce, ByteView data) {
        Bytes out(data.begin(), data.end());
        Bytes seed(nonce.begin(), nonce.end());
        for (std::size_t off = 0, ctr = 0; off < out.size(); off += 64, ++ctr) {
            Bytes block_in = seed;
            append_u64(block_in, ctr);
            Bytes ks = keyed("mock-stream", key, block_in, 64);
            for (std::size_t i = 0; i < 64 && off + i < out.size(); ++i) out[off + i] ^= ks[i];
        }
        return out;
    }
};

}  // namespace

std::unique_ptr<CryptoBackend> make_backend(const CryptoConfig& config) {
    if (config.digest_bytes < crypto_generichash_BYTES_MIN || config.digest_bytes > crypto_generichash_BYTES_MAX)
        fail(ErrorCode::ConfigError, "digest_bytes must lie in [16, 64]");
    if (config.backend == "sodium") return std::make_unique<SodiumBackend>(config);
    if (config.backend == "mock") return std::make_unique<MockBackend>(config);
    fail(ErrorCode::ConfigError, "unknown crypto backend '" + config.backend + "'");
}

Digest term_digest(const Term& t, const CryptoBackend& crypto) { return crypto.hash(t.encode()); }

Bytes sign_term(const Term& payload, const PrivateKey& sk, const CryptoBackend& crypto) {
    return crypto.sign_hash(term_digest(payload, crypto), sk);
}

Term assemble_signed(Term payload, Bytes signature) { return Term::signed_term(std::move(payload), std::move(signature)); }

bool signature_valid(const Term& signed_term, const PublicKey& pk, const CryptoBackend& crypto) {
    if (!signed_term.is_signed()) return false;
    return crypto.verify_hash(term_digest(signed_term.payload(), crypto), signed_term.bytes(), pk);
}

const Term& verify_signed(const Term& signed_term, const PublicKey& pk, const CryptoBackend& crypto) {
    if (!signature_valid(signed_term, pk, crypto)) fail(ErrorCode::BadSignature, "signature does not verify");
    return signed_term.payload();
}

Term Certificate::body() const {
    return Term::record(Tag::CertBody, {Term::text(holder_id), holder_public.to_term()});
}

Term Certificate::to_term() const { return Term::signed_term(body(), issuer_signature); }

Certificate Certificate::from_term(const Term& t) {
    if (!t.is_signed()) fail(ErrorCode::MalformedEncoding, "certificate must be a signed term");
    const Term& b = t.payload().expect_record(Tag::CertBody, 2);
    return Certificate{b.child(0).as_text(), PublicKey::from_term(b.child(1)), t.bytes()};
}

Certificate issue_certificate(std::string holder_id, const PublicKey& holder_public, const PrivateKey& root_sk,
                              const CryptoBackend& crypto) {
    Certificate c{std::move(holder_id), holder_public, {}};
    c.issuer_signature = sign_term(c.body(), root_sk, crypto);
    return c;
}

PublicKey validate_certificate(const Certificate& cert, const PublicKey& root_pk, const CryptoBackend& crypto) {
    if (!crypto.verify_hash(term_digest(cert.body(), crypto), cert.issuer_signature, root_pk))
        fail(ErrorCode::InvalidCertificate, "certificate for " + cert.holder_id + " is not root-signed");
    return cert.holder_public;
}

}  // namespace unisuf
