#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "unisuf/bytes.hpp"

namespace unisuf {

enum class AtomKind : std::uint8_t {
    Data = 1,
    Text = 2,
    Number = 3,
    SymKey = 4,
    PrivateKey = 5,
    PublicKey = 6,
    Digest = 7,
    Signature = 8,
    Nonce = 9,
};

enum class Scheme : std::uint8_t { Sym = 1, AuthSym = 2, Asym = 3 };

enum class Tag : std::uint16_t {
    Message = 1,
    RoundId,
    CertBody,
    Request,
    Success,
    Software,
    SoftwareList,
    SoftwareListEntry,
    SoftwareVersions,
    VinData,
    Vso,
    VersionEntry,
    KeyManifest,
    Mkm,
    Ska,
    SkaSecurityAccess,
    SkaSoftware,
    DownloadInstructions,
    InstallationInstructions,
    VuupContent,
    CertificatePackage,
    Vuup,
    EcuStatus,
    InstallStatus,
    Bundle,
};

// Symbolic message term. Every value on the wire and every material in the
// registry is a Term; its canonical encoding is what gets hashed.
class Term {
public:
    enum class Node : std::uint8_t { Atom = 1, Record = 2, Cipher = 3, Signed = 4 };

    Term();

    static Term atom(AtomKind kind, Bytes data);
    static Term data(Bytes data) { return atom(AtomKind::Data, std::move(data)); }
    static Term text(std::string_view s);
    static Term number(std::uint64_t v);
    static Term record(Tag tag, std::vector<Term> children);
    static Term cipher(Scheme scheme, Bytes data);
    static Term signed_term(Term payload, Bytes signature);

    Node node() const { return node_; }
    bool is_atom() const { return node_ == Node::Atom; }
    bool is_atom(AtomKind k) const { return node_ == Node::Atom && atom_kind() == k; }
    bool is_record() const { return node_ == Node::Record; }
    bool is_record(Tag t) const { return node_ == Node::Record && tag_ == t; }
    bool is_cipher() const { return node_ == Node::Cipher; }
    bool is_signed() const { return node_ == Node::Signed; }

    AtomKind atom_kind() const { return static_cast<AtomKind>(sub_); }
    Scheme scheme() const { return static_cast<Scheme>(sub_); }
    Tag tag() const { return tag_; }
    // Atom payload, cipher bytes, or signature bytes depending on node.
    const Bytes& bytes() const { return data_; }
    const std::vector<Term>& children() const { return children_; }
    const Term& payload() const;  // Signed only
    const Term& child(std::size_t i) const;

    // Typed accessors that throw MalformedEncoding on shape mismatch.
    std::string as_text() const;
    std::uint64_t as_number() const;
    const Term& expect_record(Tag t, std::size_t arity) const;

    Bytes encode() const;
    void encode_into(Bytes& out) const;
    static Term decode(ByteView bytes);

    std::string describe() const;

    friend bool operator==(const Term& a, const Term& b);
    friend bool operator!=(const Term& a, const Term& b) { return !(a == b); }
    friend bool operator<(const Term& a, const Term& b);

private:
    Node node_;
    std::uint8_t sub_;
    Tag tag_;
    Bytes data_;
    std::vector<Term> children_;
};

std::string_view tag_name(Tag t);
std::string_view atom_kind_name(AtomKind k);

// Offsets of bytes that carry values (atom payloads, cipher bytes, signature
// bytes) rather than structure. Flipping one of these keeps the encoding
// decodable, which is what a tamper test wants.
std::vector<std::size_t> value_byte_offsets(ByteView encoding);

}  // namespace unisuf
