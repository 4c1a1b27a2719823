#pragma once

#include <set>
#include <string>
#include <vector>

#include "unisuf/crypto.hpp"
#include "unisuf/term.hpp"

namespace unisuf {

// Result of closing a knowledge set under the analysis rules (splitting,
// decryption with known keys, signature payload extraction). Synthesis
// (building records, signing with known private keys, hashing known terms,
// deriving public keys) is answered lazily by knows().
class Closure {
public:
    Closure(std::set<Term> terms, const CryptoBackend& crypto);

    const std::set<Term>& terms() const { return terms_; }
    bool knows(const Term& secret) const;

private:
    const CryptoBackend* crypto_;
    std::set<Term> terms_;
    std::set<Bytes> digests_;
    std::vector<PrivateKey> private_keys_;
    std::set<Bytes> derived_publics_;
};

class AdversaryKnowledge {
public:
    // Adds a term. Substructure is exposed by derive_closure, not here, so
    // the stored set stays exactly what was seen.
    void observe(const Term& t) { observed_.insert(t); }
    // Wire bytes that do not decode are kept as an opaque data atom.
    void observe_bytes(ByteView payload);

    const std::set<Term>& observed() const { return observed_; }
    Closure derive_closure(const CryptoBackend& crypto) const;
    // Sorted digests of the observed set, for diffing runs.
    std::vector<std::string> dump(const CryptoBackend& crypto) const;

private:
    std::set<Term> observed_;
};

// Analysis fixpoint over a term set; exposed for the knowledge snapshots that
// the trace verifier re-checks.
std::set<Term> analyze(const std::set<Term>& initial, const CryptoBackend& crypto);

}  // namespace unisuf
