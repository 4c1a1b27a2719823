#include "unisuf/adversary.hpp"

#include <algorithm>
#include <deque>
#include <optional>

#include "unisuf/error.hpp"

namespace unisuf {

namespace {

std::optional<Term> try_open(const Term& cipher, const Term& key, const CryptoBackend& crypto) {
    try {
        CipherText ct = CipherText::from_term(cipher);
        Bytes plain;
        if (ct.scheme == Scheme::Asym) {
            if (!key.is_atom(AtomKind::PrivateKey)) return std::nullopt;
            plain = crypto.asym_decrypt(ct, PrivateKey{key.bytes()});
        } else {
            if (!key.is_atom(AtomKind::SymKey)) return std::nullopt;
            SymKey k = SymKey::from_term(key);
            plain = ct.scheme == Scheme::Sym ? crypto.sym_decrypt(ct, k) : crypto.auth_decrypt(ct, k);
        }
        return Term::decode(plain);
    } catch (const Error&) {
        return std::nullopt;
    }
}

}  // namespace

std::set<Term> analyze(const std::set<Term>& initial, const CryptoBackend& crypto) {
    std::set<Term> known;
    std::deque<Term> work;
    std::vector<Term> ciphers;
    std::vector<Term> keys;

    auto add = [&](const Term& t) {
        if (known.insert(t).second) work.push_back(t);
    };
    for (const auto& t : initial) add(t);

    while (!work.empty()) {
        Term t = std::move(work.front());
        work.pop_front();
        switch (t.node()) {
            case Term::Node::Record:
                for (const auto& c : t.children()) add(c);
                break;
            case Term::Node::Signed:
                add(t.payload());
                add(Term::atom(AtomKind::Signature, t.bytes()));
                break;
            case Term::Node::Cipher:
                for (const auto& k : keys)
                    if (auto p = try_open(t, k, crypto)) add(*p);
                ciphers.push_back(t);
                break;
            case Term::Node::Atom:
                if (t.is_atom(AtomKind::SymKey) || t.is_atom(AtomKind::PrivateKey)) {
                    for (const auto& c : ciphers)
                        if (auto p = try_open(c, t, crypto)) add(*p);
                    keys.push_back(t);
                }
                break;
        }
    }
    return known;
}

Closure::Closure(std::set<Term> terms, const CryptoBackend& crypto) : crypto_(&crypto), terms_(std::move(terms)) {
    for (const auto& t : terms_) {
        digests_.insert(crypto.hash(t.encode()).bytes);
        if (t.is_atom(AtomKind::PrivateKey)) {
            private_keys_.push_back(PrivateKey{t.bytes()});
            try {
                derived_publics_.insert(crypto.public_from_private(private_keys_.back()).bytes);
            } catch (const Error&) {
            }
        }
    }
}

bool Closure::knows(const Term& s) const {
    if (terms_.count(s)) return true;
    switch (s.node()) {
        case Term::Node::Record:
            return std::all_of(s.children().begin(), s.children().end(), [&](const Term& c) { return knows(c); });
        case Term::Node::Signed: {
            if (!knows(s.payload())) return false;
            if (terms_.count(Term::atom(AtomKind::Signature, s.bytes()))) return true;
            if (!crypto_->deterministic_signatures()) return false;
            for (const auto& sk : private_keys_)
                if (sign_term(s.payload(), sk, *crypto_) == s.bytes()) return true;
            return false;
        }
        case Term::Node::Cipher:
            return false;
        case Term::Node::Atom:
            if (s.is_atom(AtomKind::Digest)) return digests_.count(s.bytes()) != 0;
            if (s.is_atom(AtomKind::PublicKey)) return derived_publics_.count(s.bytes()) != 0;
            return false;
    }
    return false;
}

void AdversaryKnowledge::observe_bytes(ByteView payload) {
    try {
        observe(Term::decode(payload));
    } catch (const Error&) {
        observe(Term::data(Bytes(payload.begin(), payload.end())));
    }
}

Closure AdversaryKnowledge::derive_closure(const CryptoBackend& crypto) const {
    return Closure(analyze(observed_, crypto), crypto);
}

std::vector<std::string> AdversaryKnowledge::dump(const CryptoBackend& crypto) const {
    std::vector<std::string> out;
    for (const auto& t : observed_) out.push_back(crypto.hash(t.encode()).hex());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace unisuf
