#include "unisuf/term.hpp"

#include <tuple>

#include "unisuf/error.hpp"

namespace unisuf {

namespace {

constexpr int kMaxDepth = 64;

class Reader {
public:
    explicit Reader(ByteView in) : in_(in) {}

    std::uint8_t u8() {
        need(1);
        return in_[pos_++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(in_[pos_] << 8 | in_[pos_ + 1]);
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = v << 8 | in_[pos_ + i];
        pos_ += 4;
        return v;
    }
    Bytes take(std::size_t n) {
        need(n);
        Bytes out(in_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return out;
    }
    void skip(std::size_t n) {
        need(n);
        pos_ += n;
    }
    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == in_.size(); }
    std::size_t remaining() const { return in_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) fail(ErrorCode::MalformedEncoding, "truncated term");
    }
    ByteView in_;
    std::size_t pos_ = 0;
};

bool valid_atom_kind(std::uint8_t k) { return k >= 1 && k <= 9; }
bool valid_scheme(std::uint8_t s) { return s >= 1 && s <= 3; }
bool valid_tag(std::uint16_t t) { return t >= 1 && t <= static_cast<std::uint16_t>(Tag::Bundle); }

Term read_term(Reader& r, int depth) {
    if (depth > kMaxDepth) fail(ErrorCode::MalformedEncoding, "term nesting too deep");
    const auto node = r.u8();
    switch (node) {
        case 1: {
            auto kind = r.u8();
            if (!valid_atom_kind(kind)) fail(ErrorCode::MalformedEncoding, "unknown atom kind");
            auto len = r.u32();
            return Term::atom(static_cast<AtomKind>(kind), r.take(len));
        }
        case 2: {
            auto tag = r.u16();
            if (!valid_tag(tag)) fail(ErrorCode::MalformedEncoding, "unknown record tag");
            auto count = r.u32();
            // Each child needs at least one byte, so this bounds allocation.
            if (count > r.remaining()) fail(ErrorCode::MalformedEncoding, "record arity exceeds input");
            std::vector<Term> children;
            children.reserve(count);
            for (std::uint32_t i = 0; i < count; ++i) children.push_back(read_term(r, depth + 1));
            return Term::record(static_cast<Tag>(tag), std::move(children));
        }
        case 3: {
            auto scheme = r.u8();
            if (!valid_scheme(scheme)) fail(ErrorCode::MalformedEncoding, "unknown cipher scheme");
            auto len = r.u32();
            return Term::cipher(static_cast<Scheme>(scheme), r.take(len));
        }
        case 4: {
            Term payload = read_term(r, depth + 1);
            auto len = r.u32();
            return Term::signed_term(std::move(payload), r.take(len));
        }
        default:
            fail(ErrorCode::MalformedEncoding, "unknown node type");
    }
}

void scan_values(Reader& r, std::vector<std::size_t>& out, int depth) {
    if (depth > kMaxDepth) fail(ErrorCode::MalformedEncoding, "term nesting too deep");
    const auto node = r.u8();
    auto mark = [&](std::uint32_t len) {
        for (std::uint32_t i = 0; i < len; ++i) out.push_back(r.pos() + i);
        r.skip(len);
    };
    switch (node) {
        case 1:
        case 3:
            r.u8();
            mark(r.u32());
            break;
        case 2: {
            r.u16();
            auto count = r.u32();
            for (std::uint32_t i = 0; i < count; ++i) scan_values(r, out, depth + 1);
            break;
        }
        case 4:
            scan_values(r, out, depth + 1);
            mark(r.u32());
            break;
        default:
            fail(ErrorCode::MalformedEncoding, "unknown node type");
    }
}

}  // namespace

Term::Term() : node_(Node::Atom), sub_(static_cast<std::uint8_t>(AtomKind::Data)), tag_(Tag::Message) {}

Term Term::atom(AtomKind kind, Bytes data) {
    Term t;
    t.node_ = Node::Atom;
    t.sub_ = static_cast<std::uint8_t>(kind);
    t.data_ = std::move(data);
    return t;
}

Term Term::text(std::string_view s) { return atom(AtomKind::Text, to_bytes(s)); }

Term Term::number(std::uint64_t v) {
    Bytes b;
    append_u64(b, v);
    return atom(AtomKind::Number, std::move(b));
}

Term Term::record(Tag tag, std::vector<Term> children) {
    Term t;
    t.node_ = Node::Record;
    t.sub_ = 0;
    t.tag_ = tag;
    t.children_ = std::move(children);
    return t;
}

Term Term::cipher(Scheme scheme, Bytes data) {
    Term t;
    t.node_ = Node::Cipher;
    t.sub_ = static_cast<std::uint8_t>(scheme);
    t.data_ = std::move(data);
    return t;
}

Term Term::signed_term(Term payload, Bytes signature) {
    Term t;
    t.node_ = Node::Signed;
    t.sub_ = 0;
    t.data_ = std::move(signature);
    t.children_.push_back(std::move(payload));
    return t;
}

const Term& Term::payload() const {
    if (node_ != Node::Signed) fail(ErrorCode::MalformedEncoding, "expected signed term");
    return children_.front();
}

const Term& Term::child(std::size_t i) const {
    if (node_ != Node::Record || i >= children_.size())
        fail(ErrorCode::MalformedEncoding, "record child index out of range");
    return children_[i];
}

std::string Term::as_text() const {
    if (!is_atom(AtomKind::Text)) fail(ErrorCode::MalformedEncoding, "expected text atom");
    return to_string(data_);
}

std::uint64_t Term::as_number() const {
    if (!is_atom(AtomKind::Number) || data_.size() != 8) fail(ErrorCode::MalformedEncoding, "expected number atom");
    std::uint64_t v = 0;
    for (auto b : data_) v = v << 8 | b;
    return v;
}

const Term& Term::expect_record(Tag t, std::size_t arity) const {
    if (!is_record(t) || children_.size() != arity)
        fail(ErrorCode::MalformedEncoding, "expected " + std::string(tag_name(t)) + " record");
    return *this;
}

void Term::encode_into(Bytes& out) const {
    out.push_back(static_cast<std::uint8_t>(node_));
    switch (node_) {
        case Node::Atom:
        case Node::Cipher:
            out.push_back(sub_);
            append_u32(out, static_cast<std::uint32_t>(data_.size()));
            append(out, data_);
            break;
        case Node::Record:
            append_u16(out, static_cast<std::uint16_t>(tag_));
            append_u32(out, static_cast<std::uint32_t>(children_.size()));
            for (const auto& c : children_) c.encode_into(out);
            break;
        case Node::Signed:
            children_.front().encode_into(out);
            append_u32(out, static_cast<std::uint32_t>(data_.size()));
            append(out, data_);
            break;
    }
}

Bytes Term::encode() const {
    Bytes out;
    encode_into(out);
    return out;
}

Term Term::decode(ByteView bytes) {
    Reader r(bytes);
    Term t = read_term(r, 0);
    if (!r.done()) fail(ErrorCode::MalformedEncoding, "trailing bytes after term");
    return t;
}

std::string Term::describe() const {
    switch (node_) {
        case Node::Atom:
            if (atom_kind() == AtomKind::Text) return "\"" + to_string(data_) + "\"";
            if (atom_kind() == AtomKind::Number) return std::to_string(as_number());
            return std::string(atom_kind_name(atom_kind())) + "(" + std::to_string(data_.size()) + "B)";
        case Node::Record: {
            std::string s(tag_name(tag_));
            s += "[";
            for (std::size_t i = 0; i < children_.size(); ++i) {
                if (i) s += ", ";
                s += children_[i].describe();
            }
            return s + "]";
        }
        case Node::Cipher:
            return "Cipher" + std::to_string(sub_) + "(" + std::to_string(data_.size()) + "B)";
        case Node::Signed:
            return "Signed{" + children_.front().describe() + "}";
    }
    return "?";
}

bool operator==(const Term& a, const Term& b) {
    return a.node_ == b.node_ && a.sub_ == b.sub_ && a.tag_ == b.tag_ && a.data_ == b.data_ &&
           a.children_ == b.children_;
}

bool operator<(const Term& a, const Term& b) {
    return std::tie(a.node_, a.sub_, a.tag_, a.data_, a.children_) <
           std::tie(b.node_, b.sub_, b.tag_, b.data_, b.children_);
}

std::string_view tag_name(Tag t) {
    switch (t) {
        case Tag::Message: return "Message";
        case Tag::RoundId: return "RoundId";
        case Tag::CertBody: return "CertBody";
        case Tag::Request: return "Request";
        case Tag::Success: return "Success";
        case Tag::Software: return "Software";
        case Tag::SoftwareList: return "SoftwareList";
        case Tag::SoftwareListEntry: return "SoftwareListEntry";
        case Tag::SoftwareVersions: return "SoftwareVersions";
        case Tag::VinData: return "VinData";
        case Tag::Vso: return "Vso";
        case Tag::VersionEntry: return "VersionEntry";
        case Tag::KeyManifest: return "KeyManifest";
        case Tag::Mkm: return "Mkm";
        case Tag::Ska: return "Ska";
        case Tag::SkaSecurityAccess: return "SkaSecurityAccess";
        case Tag::SkaSoftware: return "SkaSoftware";
        case Tag::DownloadInstructions: return "DownloadInstructions";
        case Tag::InstallationInstructions: return "InstallationInstructions";
        case Tag::VuupContent: return "VuupContent";
        case Tag::CertificatePackage: return "CertificatePackage";
        case Tag::Vuup: return "Vuup";
        case Tag::EcuStatus: return "EcuStatus";
        case Tag::InstallStatus: return "InstallStatus";
        case Tag::Bundle: return "Bundle";
    }
    return "?";
}

std::string_view atom_kind_name(AtomKind k) {
    switch (k) {
        case AtomKind::Data: return "Data";
        case AtomKind::Text: return "Text";
        case AtomKind::Number: return "Number";
        case AtomKind::SymKey: return "SymKey";
        case AtomKind::PrivateKey: return "PrivateKey";
        case AtomKind::PublicKey: return "PublicKey";
        case AtomKind::Digest: return "Digest";
        case AtomKind::Signature: return "Signature";
        case AtomKind::Nonce: return "Nonce";
    }
    return "?";
}

std::vector<std::size_t> value_byte_offsets(ByteView encoding) {
    Reader r(encoding);
    std::vector<std::size_t> out;
    scan_values(r, out, 0);
    return out;
}

}  // namespace unisuf
