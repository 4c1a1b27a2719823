#include <gtest/gtest.h>

#include <functional>

#include "unisuf/entities.hpp"
#include "unisuf/error.hpp"

using namespace unisuf;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an error";
    return ErrorCode::ConfigError;
}

class EntitiesTest : public ::testing::TestWithParam<std::string> {
protected:
    void SetUp() override {
        crypto = make_backend(CryptoConfig{GetParam(), 32, 32});
        supplier = crypto->generate_keypair(rng);
        intruder = crypto->generate_keypair(rng);
        pda = crypto->generate_keypair(rng);
        psa = crypto->generate_keypair(rng);
        vehicle = crypto->generate_keypair(rng);
        ecu.security_access_key = crypto->generate_sym_key(SymKeyKind::SecurityAccess, rng);
    }

    // Walks the ECU through a correct challenge-response.
    void unlock() {
        Bytes c = ecu_challenge(ecu, rng);
        ASSERT_EQ(ecu_verify_response(ecu, crypto->challenge_response(c, ecu.security_access_key), *crypto),
                  UnlockResult::Unlocked);
    }

    Term signed_sw(std::uint64_t version, const KeyPair& by) {
        return sign_software(Software{version, rng.bytes(32)}, by.priv, *crypto);
    }

    Rng rng{99};
    std::unique_ptr<CryptoBackend> crypto;
    KeyPair supplier, intruder, pda, psa, vehicle;
    EcuState ecu;
};

TEST_P(EntitiesTest, CorrectResponseUnlocksOnce) {
    Bytes c = ecu_challenge(ecu, rng);
    Bytes r = crypto->challenge_response(c, ecu.security_access_key);
    EXPECT_EQ(ecu_verify_response(ecu, r, *crypto), UnlockResult::Unlocked);
    EXPECT_FALSE(ecu.locked);
    EXPECT_EQ(ecu.unlocked_by, c);
    // The challenge was consumed, so the same answer cannot be reused.
    ecu.locked = true;
    EXPECT_EQ(ecu_verify_response(ecu, r, *crypto), UnlockResult::Rejected);
}

TEST_P(EntitiesTest, WrongResponseConsumesChallenge) {
    Bytes c = ecu_challenge(ecu, rng);
    Bytes r = crypto->challenge_response(c, ecu.security_access_key);
    r[0] ^= 1;
    EXPECT_EQ(ecu_verify_response(ecu, r, *crypto), UnlockResult::Rejected);
    EXPECT_TRUE(ecu.locked);
    r[0] ^= 1;
    EXPECT_EQ(ecu_verify_response(ecu, r, *crypto), UnlockResult::Rejected);
}

TEST_P(EntitiesTest, ResponseUnderOtherKeyRejected) {
    Bytes c = ecu_challenge(ecu, rng);
    SymKey other = crypto->generate_sym_key(SymKeyKind::SecurityAccess, rng);
    EXPECT_EQ(ecu_verify_response(ecu, crypto->challenge_response(c, other), *crypto), UnlockResult::Rejected);
}

TEST_P(EntitiesTest, InstallRequiresUnlock) {
    auto r = ecu_install(ecu, signed_sw(2, supplier), supplier.pub, *crypto);
    EXPECT_FALSE(r.installed);
    EXPECT_EQ(r.reason, "Locked");
}

TEST_P(EntitiesTest, InstallNewerSignedSoftwareThenRelock) {
    ecu.installed_version = 1;
    unlock();
    auto r = ecu_install(ecu, signed_sw(2, supplier), supplier.pub, *crypto);
    EXPECT_TRUE(r.installed);
    EXPECT_EQ(ecu.installed_version, 2u);
    EXPECT_TRUE(ecu.locked);
    EXPECT_EQ(ecu_install(ecu, signed_sw(3, supplier), supplier.pub, *crypto).reason, "Locked");
}

TEST_P(EntitiesTest, ForeignSignatureIsBadSignature) {
    unlock();
    auto r = ecu_install(ecu, signed_sw(5, intruder), supplier.pub, *crypto);
    EXPECT_FALSE(r.installed);
    EXPECT_EQ(r.reason, "BadSignature");
    EXPECT_TRUE(ecu.locked);
}

TEST_P(EntitiesTest, EveryContentByteFlipIsBadSignature) {
    Term good = signed_sw(4, supplier);
    Bytes enc = good.encode();
    auto offs = value_byte_offsets(enc);
    for (std::size_t off : offs) {
        Bytes bad = enc;
        bad[off] ^= 0x40;
        Term t = Term::decode(bad);
        ecu.installed_version = 0;
        unlock();
        auto r = ecu_install(ecu, t, supplier.pub, *crypto);
        EXPECT_FALSE(r.installed) << "offset " << off;
        EXPECT_EQ(r.reason, "BadSignature") << "offset " << off;
    }
}

TEST_P(EntitiesTest, UnsignedTermIsMalformed) {
    unlock();
    EXPECT_EQ(ecu_install(ecu, Term::data({1, 2}), supplier.pub, *crypto).reason, "Malformed");
}

TEST_P(EntitiesTest, RollbackRejectedInRandomizedPairs) {
    Rng trials(2024);
    for (int i = 0; i < 50; ++i) {
        std::uint64_t installed = trials.uniform(1, 1000);
        std::uint64_t candidate = trials.uniform(0, installed);
        ecu.installed_version = installed;
        unlock();
        auto r = ecu_install(ecu, signed_sw(candidate, supplier), supplier.pub, *crypto);
        EXPECT_FALSE(r.installed);
        EXPECT_EQ(r.reason, "StaleVersion") << installed << " vs " << candidate;
        EXPECT_EQ(ecu.installed_version, installed);
    }
}

TEST_P(EntitiesTest, VaultBindsKeyToPolicy) {
    SymKey dkm_key = crypto->generate_sym_key(SymKeyKind::Dkm, rng);
    KeyManifest m = build_key_manifest(dkm_key, vehicle.pub, std::string(policy::kDecryptDownloadInstructions),
                                       SymKeyKind::Dkm, *crypto, rng);
    Term signed_m = assemble_signed(m.to_term(), sign_term(m.to_term(), pda.priv, *crypto));
    CsaVault vault;
    vault.associate("dkm", signed_m, pda.pub, vehicle.priv, policy::kDecryptDownloadInstructions, *crypto);
    ASSERT_TRUE(vault.has("dkm"));

    Term di = Term::text("instructions");
    Term ct = crypto->sym_encrypt(di.encode(), dkm_key, rng).to_term();
    EXPECT_EQ(Term::decode(vault.use("dkm", policy::kDecryptDownloadInstructions, ct, *crypto)), di);
    EXPECT_EQ(code_of([&] { vault.use("dkm", policy::kDecryptInstallationInstructions, ct, *crypto); }),
              ErrorCode::PolicyViolation);
    EXPECT_EQ(code_of([&] { vault.use("missing", policy::kDecryptDownloadInstructions, ct, *crypto); }),
              ErrorCode::PolicyViolation);
}

TEST_P(EntitiesTest, VaultRejectsWrongPolicyAndWrongSigner) {
    SymKey k = crypto->generate_sym_key(SymKeyKind::Ikm, rng);
    KeyManifest m = build_key_manifest(k, vehicle.pub, std::string(policy::kDecryptInstallationInstructions),
                                       SymKeyKind::Ikm, *crypto, rng);
    Term signed_m = assemble_signed(m.to_term(), sign_term(m.to_term(), pda.priv, *crypto));
    CsaVault vault;
    EXPECT_EQ(code_of([&] {
                  vault.associate("x", signed_m, pda.pub, vehicle.priv, policy::kDecryptDownloadInstructions, *crypto);
              }),
              ErrorCode::PolicyViolation);
    EXPECT_EQ(code_of([&] {
                  vault.associate("x", signed_m, intruder.pub, vehicle.priv,
                                  policy::kDecryptInstallationInstructions, *crypto);
              }),
              ErrorCode::BadSignature);
    EXPECT_FALSE(vault.has("x"));
}

TEST_P(EntitiesTest, MkmUnwrapsSkaEntriesByKind) {
    SymKey sa = crypto->generate_sym_key(SymKeyKind::SecurityAccess, rng);
    SymKey sw = crypto->generate_sym_key(SymKeyKind::Software, rng);
    SymKey mkm_sa = crypto->generate_sym_key(SymKeyKind::MkmSecurityAccess, rng);
    SymKey mkm_sw = crypto->generate_sym_key(SymKeyKind::MkmSoftware, rng);
    MasterKeyManifest mkm{build_key_manifest(mkm_sa, vehicle.pub, std::string(policy::kUnwrapSecurityAccess),
                                             SymKeyKind::MkmSecurityAccess, *crypto, rng),
                          build_key_manifest(mkm_sw, vehicle.pub, std::string(policy::kUnwrapSoftwareKey),
                                             SymKeyKind::MkmSoftware, *crypto, rng)};
    Term signed_mkm = assemble_signed(mkm.to_term(), sign_term(mkm.to_term(), psa.priv, *crypto));
    SecureKeyArray ska = build_ska({sa}, {sw}, mkm_sa, mkm_sw, *crypto, rng);

    CsaVault vault;
    vault.associate_mkm(signed_mkm, psa.pub, vehicle.priv, *crypto);
    Term sa_entry = ska.security_access_entries[0].to_term();
    Term sw_entry = ska.software_entries[0].to_term();
    EXPECT_EQ(SymKey::from_term(Term::decode(vault.use("mkm_sa", policy::kUnwrapSecurityAccess, sa_entry, *crypto))),
              sa);
    EXPECT_EQ(SymKey::from_term(Term::decode(vault.use("mkm_sw", policy::kUnwrapSoftwareKey, sw_entry, *crypto))), sw);
    // An entry opened under the other master fails rather than yielding a key.
    EXPECT_THROW(vault.use("mkm_sa", policy::kUnwrapSecurityAccess, sw_entry, *crypto), Error);
    EXPECT_EQ(code_of([&] { vault.use("mkm_sw", policy::kUnwrapSecurityAccess, sa_entry, *crypto); }),
              ErrorCode::PolicyViolation);
}

INSTANTIATE_TEST_SUITE_P(Backends, EntitiesTest, ::testing::Values("sodium", "mock"));

TEST(Messages, StepComesFirst) {
    Term m = make_message("D17.17", {Term::number(3)});
    ASSERT_TRUE(m.is_record(Tag::Message));
    EXPECT_EQ(m.child(0).as_text(), "D17.17");
    EXPECT_EQ(message_step(m.encode()), std::optional<std::string>("D17.17"));
    EXPECT_TRUE(request_flag("x").is_record(Tag::Request));
    EXPECT_TRUE(success_flag("x").is_record(Tag::Success));
}

TEST(Handlers, UnknownStepIsIgnoredNotFatal) {
    auto crypto = make_backend(CryptoConfig{"mock", 32, 32});
    Rng rng(1);
    Directory dir;
    EntityState ecu;
    ecu.id = EntityId{Role::ECU, std::string("V1")};
    RoundContext ctx;
    ctx.round = UpdateRoundId{std::string("V1"), 100, 1};
    Services s{*crypto, rng, dir, 0, {}, {}};
    Envelope env;
    env.sender = EntityId{Role::CIA, std::string("V1")};
    env.receiver = ecu.id;
    EXPECT_EQ(code_of([&] { handle(ecu, ctx, env, make_message("X9", {}), s); }), ErrorCode::UnexpectedMessage);
    EXPECT_EQ(code_of([&] { handle(ecu, ctx, env, Term::number(1), s); }), ErrorCode::UnexpectedMessage);
    EXPECT_TRUE(s.out.empty());
}

TEST(Handlers, EcuAnswersChallengeRequest) {
    auto crypto = make_backend(CryptoConfig{"mock", 32, 32});
    Rng rng(1);
    Directory dir;
    EntityState ecu;
    ecu.id = EntityId{Role::ECU, std::string("V1")};
    RoundContext ctx;
    ctx.round = UpdateRoundId{std::string("V1"), 100, 1};
    Services s{*crypto, rng, dir, 0, {}, {}};
    Envelope env;
    env.sender = EntityId{Role::CIA, std::string("V1")};
    handle(ecu, ctx, env, make_message("D17.1", {request_flag("SecurityAccess")}), s);
    ASSERT_TRUE(ecu.ecu.pending_challenge.has_value());
    int sends = 0, emits = 0;
    for (const auto& a : s.out) {
        if (const auto* snd = std::get_if<Send>(&a)) {
            ++sends;
            EXPECT_EQ(snd->to.role, Role::CIA);
            EXPECT_EQ(snd->message.child(1), Term::atom(AtomKind::Nonce, *ecu.ecu.pending_challenge));
        }
        if (std::holds_alternative<Emit>(a)) ++emits;
    }
    EXPECT_EQ(sends, 1);
    EXPECT_EQ(emits, 1);
}

}  // namespace
