#include <gtest/gtest.h>

#include "unisuf/adversary.hpp"
#include "unisuf/error.hpp"
#include "unisuf/materials.hpp"

using namespace unisuf;

namespace {

// Deliberately simple oracle: rescan the whole set against every key in the
// set until nothing changes. No worklist, no key index.
std::set<Term> naive_fixpoint(std::set<Term> k, const CryptoBackend& crypto) {
    for (;;) {
        std::set<Term> next = k;
        for (const auto& t : k) {
            if (t.is_record())
                for (const auto& c : t.children()) next.insert(c);
            if (t.is_signed()) {
                next.insert(t.payload());
                next.insert(Term::atom(AtomKind::Signature, t.bytes()));
            }
            if (!t.is_cipher()) continue;
            for (const auto& key : k) {
                try {
                    Bytes plain;
                    CipherText ct{t.scheme(), t.bytes()};
                    if (t.scheme() == Scheme::Asym && key.is_atom(AtomKind::PrivateKey))
                        plain = crypto.asym_decrypt(ct, PrivateKey{key.bytes()});
                    else if (t.scheme() == Scheme::Sym && key.is_atom(AtomKind::SymKey))
                        plain = crypto.sym_decrypt(ct, SymKey::from_term(key));
                    else if (t.scheme() == Scheme::AuthSym && key.is_atom(AtomKind::SymKey))
                        plain = crypto.auth_decrypt(ct, SymKey::from_term(key));
                    else
                        continue;
                    next.insert(Term::decode(plain));
                } catch (const Error&) {
                }
            }
        }
        if (next.size() == k.size()) return k;
        k = std::move(next);
    }
}

struct Universe {
    std::vector<Term> items;
    std::vector<SymKey> sym;
    std::vector<KeyPair> pairs;
};

Universe make_universe(const CryptoBackend& c, Rng& rng) {
    Universe u;
    for (auto kind : {SymKeyKind::Software, SymKeyKind::Dkm, SymKeyKind::MkmSoftware, SymKeyKind::Ikm})
        u.sym.push_back(c.generate_sym_key(kind, rng));
    u.pairs = {c.generate_keypair(rng), c.generate_keypair(rng)};
    auto enc = [&](Scheme s, const Term& m, std::size_t key) {
        Bytes b = m.encode();
        if (s == Scheme::Sym) return c.sym_encrypt(b, u.sym[key], rng).to_term();
        if (s == Scheme::AuthSym) return c.auth_encrypt(b, u.sym[key], rng).to_term();
        return c.asym_encrypt(b, u.pairs[key].pub, rng).to_term();
    };
    Term s1 = Term::text("secret-1"), s2 = Term::text("secret-2");
    auto& I = u.items;
    for (const auto& k : u.sym) I.push_back(k.to_term());
    for (const auto& p : u.pairs) I.push_back(p.priv.to_term());
    I.push_back(s1);
    I.push_back(enc(Scheme::Sym, s1, 0));
    I.push_back(enc(Scheme::AuthSym, u.sym[1].to_term(), 2));
    I.push_back(enc(Scheme::AuthSym, Term::record(Tag::Bundle, {s2, u.sym[3].to_term()}), 0));
    I.push_back(enc(Scheme::Asym, u.sym[2].to_term(), 0));
    I.push_back(enc(Scheme::Asym, Term::record(Tag::Bundle, {u.pairs[0].priv.to_term()}), 1));
    I.push_back(enc(Scheme::Sym, enc(Scheme::AuthSym, s2, 3), 1));
    I.push_back(enc(Scheme::AuthSym, Term::text("deep"), 3));
    I.push_back(assemble_signed(s2, sign_term(s2, u.pairs[0].priv, c)));
    I.push_back(Term::record(Tag::Bundle, {enc(Scheme::Sym, u.pairs[1].priv.to_term(), 2), Term::number(7)}));
    I.push_back(Term::record(Tag::Bundle, {u.pairs[0].pub.to_term(), Term::text("pub")}));
    return u;
}

class AdversaryTest : public ::testing::TestWithParam<std::string> {
protected:
    void SetUp() override { crypto = make_backend(CryptoConfig{GetParam(), 32, 32}); }
    std::unique_ptr<CryptoBackend> crypto;
};

}  // namespace

TEST_P(AdversaryTest, ClosureMatchesNaiveOracleOn200RandomSets) {
    Rng rng(2024);
    Universe u = make_universe(*crypto, rng);
    for (int trial = 0; trial < 200; ++trial) {
        std::set<Term> initial;
        while (initial.size() < 5) initial.insert(u.items[rng.uniform(0, u.items.size() - 1)]);
        auto fast = analyze(initial, *crypto);
        auto slow = naive_fixpoint(initial, *crypto);
        ASSERT_EQ(fast, slow) << "trial " << trial;
    }
}

TEST_P(AdversaryTest, ClosureIsIdempotent) {
    Rng rng(5);
    Universe u = make_universe(*crypto, rng);
    std::set<Term> all(u.items.begin(), u.items.end());
    auto once = analyze(all, *crypto);
    EXPECT_EQ(analyze(once, *crypto), once);
}

TEST_P(AdversaryTest, AuthSymWithKeyRevealsPlaintext) {
    Rng rng(1);
    SymKey k = crypto->generate_sym_key(SymKeyKind::Dkm, rng);
    Term m = Term::text("instructions");
    AdversaryKnowledge kb;
    kb.observe(crypto->auth_encrypt(m.encode(), k, rng).to_term());
    EXPECT_FALSE(kb.derive_closure(*crypto).knows(m));
    kb.observe(k.to_term());
    EXPECT_TRUE(kb.derive_closure(*crypto).knows(m));
}

TEST_P(AdversaryTest, AsymWrapWithoutPrivateKeyStaysSecret) {
    Rng rng(2);
    KeyPair vehicle = crypto->generate_keypair(rng);
    SymKey k = crypto->generate_sym_key(SymKeyKind::Dkm, rng);
    AdversaryKnowledge kb;
    kb.observe(crypto->asym_encrypt(k.to_term().encode(), vehicle.pub, rng).to_term());
    kb.observe(vehicle.pub.to_term());
    auto cl = kb.derive_closure(*crypto);
    EXPECT_FALSE(cl.knows(k.to_term()));
    EXPECT_FALSE(cl.knows(vehicle.priv.to_term()));
}

TEST_P(AdversaryTest, EncasedSoftwareDoesNotRevealSoftware) {
    Rng rng(3);
    KeyPair supplier = crypto->generate_keypair(rng), vcm = crypto->generate_keypair(rng);
    SymKey key = crypto->generate_sym_key(SymKeyKind::Software, rng);
    Software sw{4, rng.bytes(40)};
    Term signed_sw = sign_software(sw, supplier.priv, *crypto);
    Term encased = encase_software(signed_sw, key, vcm.priv, supplier.pub, *crypto, rng);
    AdversaryKnowledge kb;
    kb.observe(encased);
    kb.observe(supplier.pub.to_term());
    kb.observe(vcm.pub.to_term());
    auto cl = kb.derive_closure(*crypto);
    EXPECT_FALSE(cl.knows(sw.to_term()));
    EXPECT_FALSE(cl.knows(signed_sw));
    EXPECT_FALSE(cl.knows(key.to_term()));
    // Positive control: handing over the key breaks it open.
    kb.observe(key.to_term());
    auto leaked = kb.derive_closure(*crypto);
    EXPECT_TRUE(leaked.knows(sw.to_term()));
    EXPECT_TRUE(leaked.knows(signed_sw));
}

TEST_P(AdversaryTest, SynthesisRules) {
    Rng rng(4);
    KeyPair kp = crypto->generate_keypair(rng);
    Term a = Term::text("a"), b = Term::text("b");
    AdversaryKnowledge kb;
    kb.observe(Term::record(Tag::Bundle, {a, b}));
    auto cl = kb.derive_closure(*crypto);
    EXPECT_TRUE(cl.knows(Term::record(Tag::Request, {b, a})));
    EXPECT_TRUE(cl.knows(crypto->hash(a.encode()).to_term()));
    EXPECT_FALSE(cl.knows(Term::text("c")));
    Term signed_a = assemble_signed(a, sign_term(a, kp.priv, *crypto));
    EXPECT_FALSE(cl.knows(signed_a));
    EXPECT_FALSE(cl.knows(kp.pub.to_term()));
    kb.observe(kp.priv.to_term());
    auto with_key = kb.derive_closure(*crypto);
    EXPECT_TRUE(with_key.knows(kp.pub.to_term()));
    EXPECT_EQ(with_key.knows(signed_a), crypto->deterministic_signatures());
}

TEST_P(AdversaryTest, ObserveIsIdempotentAndKeepsUndecodableBytes) {
    AdversaryKnowledge kb;
    Term t = Term::record(Tag::Bundle, {Term::text("x")});
    kb.observe_bytes(t.encode());
    kb.observe_bytes(t.encode());
    EXPECT_EQ(kb.observed().size(), 1u);
    kb.observe_bytes(Bytes{0xde, 0xad});
    EXPECT_EQ(kb.observed().size(), 2u);
    EXPECT_TRUE(kb.derive_closure(*crypto).knows(Term::data({0xde, 0xad})));
    auto dump = kb.dump(*crypto);
    EXPECT_TRUE(std::is_sorted(dump.begin(), dump.end()));
}

INSTANTIATE_TEST_SUITE_P(Backends, AdversaryTest, ::testing::Values("sodium", "mock"));
