#include <gtest/gtest.h>

#include "unisuf/error.hpp"
#include "unisuf/materials.hpp"

using namespace unisuf;

namespace {

class MaterialsTest : public ::testing::TestWithParam<std::string> {
protected:
    void SetUp() override {
        crypto = make_backend(CryptoConfig{GetParam(), 32, 32});
        root = crypto->generate_keypair(rng);
        supplier = crypto->generate_keypair(rng);
        vcm = crypto->generate_keypair(rng);
        pda = crypto->generate_keypair(rng);
        pia = crypto->generate_keypair(rng);
        vehicle = crypto->generate_keypair(rng);
    }

    ErrorCode code_of(const std::function<void()>& fn) {
        try {
            fn();
        } catch (const Error& e) {
            return e.code();
        }
        ADD_FAILURE() << "expected an error";
        return ErrorCode::ConfigError;
    }

    Term sign(const Term& payload, const KeyPair& kp) {
        return assemble_signed(payload, sign_term(payload, kp.priv, *crypto));
    }

    VuupParts honest_parts() {
        auto dkm_key = crypto->generate_sym_key(SymKeyKind::Dkm, rng);
        auto ikm_key = crypto->generate_sym_key(SymKeyKind::Ikm, rng);
        VuupParts p;
        p.pda_cert = issue_certificate("PDA", pda.pub, root.priv, *crypto);
        p.pia_cert = issue_certificate("PIA", pia.pub, root.priv, *crypto);
        p.enc_download_instructions = sign(crypto->sym_encrypt(to_bytes("di"), dkm_key, rng).to_term(), pda);
        p.dkm = sign(build_key_manifest(dkm_key, vehicle.pub, std::string(policy::kDecryptDownloadInstructions),
                                        SymKeyKind::Dkm, *crypto, rng)
                         .to_term(),
                     pda);
        p.enc_installation_instructions = sign(crypto->sym_encrypt(to_bytes("ii"), ikm_key, rng).to_term(), pia);
        p.ikm = sign(build_key_manifest(ikm_key, vehicle.pub, std::string(policy::kDecryptInstallationInstructions),
                                        SymKeyKind::Ikm, *crypto, rng)
                         .to_term(),
                     pia);
        return p;
    }

    std::unique_ptr<CryptoBackend> crypto;
    Rng rng{77};
    KeyPair root, supplier, vcm, pda, pia, vehicle;
};

}  // namespace

TEST_P(MaterialsTest, SoftwareSerializesAsVersionThenContent) {
    Software sw{0x0102, {0xaa, 0xbb}};
    Bytes expect{0, 0, 0, 0, 0, 0, 1, 2, 0xaa, 0xbb};
    EXPECT_EQ(sw.serialize(), expect);
    EXPECT_EQ(Software::from_term(sw.to_term()), sw);
}

TEST_P(MaterialsTest, EncaseAndOpenRoundTrip) {
    Software sw{2, to_bytes("firmware v2")};
    Term signed_sw = sign_software(sw, supplier.priv, *crypto);
    auto key = crypto->generate_sym_key(SymKeyKind::Software, rng);
    Term enc = encase_software(signed_sw, key, vcm.priv, supplier.pub, *crypto, rng);
    EXPECT_EQ(open_encased(enc, key, vcm.pub, supplier.pub, *crypto), sw);
    EXPECT_EQ(open_encased_signed(enc, key, vcm.pub, supplier.pub, *crypto), signed_sw);
}

TEST_P(MaterialsTest, EncaseRejectsBadSupplierSignature) {
    Term signed_sw = sign_software(Software{2, to_bytes("fw")}, vcm.priv, *crypto);
    auto key = crypto->generate_sym_key(SymKeyKind::Software, rng);
    EXPECT_EQ(code_of([&] { encase_software(signed_sw, key, vcm.priv, supplier.pub, *crypto, rng); }),
              ErrorCode::BadSignature);
}

TEST_P(MaterialsTest, FreshKeysGiveDistinctEncasings) {
    Term signed_sw = sign_software(Software{2, to_bytes("fw")}, supplier.priv, *crypto);
    std::set<std::string> digests;
    for (int i = 0; i < 10; ++i) {
        auto key = crypto->generate_sym_key(SymKeyKind::Software, rng);
        digests.insert(term_digest(encase_software(signed_sw, key, vcm.priv, supplier.pub, *crypto, rng), *crypto).hex());
    }
    EXPECT_EQ(digests.size(), 10u);
}

TEST_P(MaterialsTest, OpenEncasedReportsLayersInOrder) {
    Term signed_sw = sign_software(Software{2, to_bytes("fw")}, supplier.priv, *crypto);
    auto key = crypto->generate_sym_key(SymKeyKind::Software, rng);
    auto wrong = crypto->generate_sym_key(SymKeyKind::Software, rng);
    Term enc = encase_software(signed_sw, key, vcm.priv, supplier.pub, *crypto, rng);

    // Outer re-signed by an adversary key: rejected before decryption, even
    // with a wrong software key that would otherwise fail later.
    auto adv = crypto->generate_keypair(rng);
    Term resigned = sign(enc.payload(), adv);
    EXPECT_EQ(code_of([&] { open_encased(resigned, wrong, vcm.pub, supplier.pub, *crypto); }),
              ErrorCode::OuterSignatureInvalid);
    EXPECT_EQ(code_of([&] { open_encased(enc, wrong, vcm.pub, supplier.pub, *crypto); }), ErrorCode::DecryptFailure);

    Term badly_signed_inner = sign_software(Software{2, to_bytes("fw")}, adv.priv, *crypto);
    Term ct = crypto->sym_encrypt(badly_signed_inner.encode(), key, rng).to_term();
    Term enc2 = sign(ct, vcm);
    EXPECT_EQ(code_of([&] { open_encased(enc2, key, vcm.pub, supplier.pub, *crypto); }),
              ErrorCode::InnerSignatureInvalid);
}

TEST_P(MaterialsTest, KeyManifestWrapsForOneVehicle) {
    auto dkm = crypto->generate_sym_key(SymKeyKind::Dkm, rng);
    auto m = build_key_manifest(dkm, vehicle.pub, "decrypt-download-instructions", SymKeyKind::Dkm, *crypto, rng);
    EXPECT_EQ(unwrap_key_manifest(m, vehicle.priv, *crypto), dkm);
    EXPECT_EQ(KeyManifest::from_term(m.to_term()), m);
    EXPECT_EQ(code_of([&] { unwrap_key_manifest(m, pda.priv, *crypto); }), ErrorCode::DecryptFailure);
    auto sw = crypto->generate_sym_key(SymKeyKind::Software, rng);
    EXPECT_EQ(code_of([&] { build_key_manifest(sw, vehicle.pub, "x", SymKeyKind::Dkm, *crypto, rng); }),
              ErrorCode::KindMismatch);
}

TEST_P(MaterialsTest, SkaEntriesOpenOnlyUnderTheirMaster) {
    auto mkm_sa = crypto->generate_sym_key(SymKeyKind::MkmSecurityAccess, rng);
    auto mkm_sw = crypto->generate_sym_key(SymKeyKind::MkmSoftware, rng);
    auto sa = crypto->generate_sym_key(SymKeyKind::SecurityAccess, rng);
    auto sw = crypto->generate_sym_key(SymKeyKind::Software, rng);
    auto ska = build_ska({sa}, {sw}, mkm_sa, mkm_sw, *crypto, rng);
    ASSERT_EQ(ska.security_access_entries.size(), 1u);
    EXPECT_EQ(open_ska_entry(ska.security_access_entries[0], mkm_sa, *crypto), sa);
    EXPECT_EQ(open_ska_entry(ska.software_entries[0], mkm_sw, *crypto), sw);
    EXPECT_EQ(code_of([&] { open_ska_entry(ska.security_access_entries[0], mkm_sw, *crypto); }),
              ErrorCode::AuthFailure);
    EXPECT_EQ(code_of([&] { build_ska({}, {sw}, mkm_sa, mkm_sw, *crypto, rng); }), ErrorCode::EmptyKeyList);
}

TEST_P(MaterialsTest, SkaPreservesOrderForThreeKeysEach) {
    auto mkm_sa = crypto->generate_sym_key(SymKeyKind::MkmSecurityAccess, rng);
    auto mkm_sw = crypto->generate_sym_key(SymKeyKind::MkmSoftware, rng);
    std::vector<SymKey> sa, sw;
    for (int i = 0; i < 3; ++i) {
        sa.push_back(crypto->generate_sym_key(SymKeyKind::SecurityAccess, rng));
        sw.push_back(crypto->generate_sym_key(SymKeyKind::Software, rng));
    }
    auto ska = build_ska(sa, sw, mkm_sa, mkm_sw, *crypto, rng);
    auto back = SecureKeyArray::from_term(ska.to_term());
    ASSERT_EQ(back.security_access_entries.size() + back.software_entries.size(), 6u);
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(open_ska_entry(back.security_access_entries[i], mkm_sa, *crypto), sa[i]);
        EXPECT_EQ(open_ska_entry(back.software_entries[i], mkm_sw, *crypto), sw[i]);
    }
}

TEST_P(MaterialsTest, SoftwareListKeepsStrictlyNewerSubset) {
    Term round = Term::record(Tag::RoundId, {Term::text("V1"), Term::number(100), Term::number(1)});
    Vso vso{round, "V1", {{"ecu", 1}, {"gw", 3}, {"tcu", 5}}};
    VinData vd{"V1", "model"};
    SoftwareVersions sv{{{"ecu", 2, "u1"}, {"gw", 3, "u2"}, {"tcu", 4, "u3"}, {"new", 1, "u4"}}};
    auto list = build_software_list(vso, vd, sv);
    // Brute-force filter as the oracle.
    std::vector<SoftwareListEntry> expect;
    for (const auto& e : sv.latest) {
        auto it = vso.onboard_versions.find(e.software_id);
        if (e.version > (it == vso.onboard_versions.end() ? 0 : it->second)) expect.push_back(e);
    }
    std::sort(expect.begin(), expect.end(), [](auto& a, auto& b) { return a.software_id < b.software_id; });
    EXPECT_EQ(list.entries, expect);
    EXPECT_EQ(list.entries.size(), 2u);

    Vso same{round, "V1", {{"ecu", 2}}};
    EXPECT_TRUE(build_software_list(same, vd, SoftwareVersions{{{"ecu", 2, "u"}}}).entries.empty());

    Term signed_list = build_signed_software_list(vso, vd, sv, vcm.priv, *crypto);
    EXPECT_EQ(SoftwareList::from_term(verify_signed(signed_list, vcm.pub, *crypto)).entries, expect);
}

TEST_P(MaterialsTest, VuupBuildAndValidate) {
    auto parts = honest_parts();
    auto vcm_cert = issue_certificate("VCM", vcm.pub, root.priv, *crypto);
    Vuup v = build_vuup(parts, vcm.priv, vcm_cert, root.pub, *crypto);
    VuupContent c = validate_vuup(Vuup::from_term(v.to_term()), root.pub, *crypto);
    EXPECT_EQ(c.to_term(), v.content.payload());
    EXPECT_EQ(c.dkm, *parts.dkm);
}

TEST_P(MaterialsTest, VuupRejectsSwappedSignerMissingPartAndRogueCert) {
    auto vcm_cert = issue_certificate("VCM", vcm.pub, root.priv, *crypto);
    auto parts = honest_parts();
    parts.dkm = sign(parts.dkm->payload(), pia);
    try {
        build_vuup(parts, vcm.priv, vcm_cert, root.pub, *crypto);
        ADD_FAILURE();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::PartSignatureInvalid);
        EXPECT_EQ(e.detail(), "DKM");
    }
    auto missing = honest_parts();
    missing.ikm.reset();
    EXPECT_EQ(code_of([&] { build_vuup(missing, vcm.priv, vcm_cert, root.pub, *crypto); }), ErrorCode::MissingPart);

    auto adv = crypto->generate_keypair(rng);
    Vuup v = build_vuup(honest_parts(), vcm.priv, vcm_cert, root.pub, *crypto);
    v.vcm_cert = issue_certificate("VCM", adv.pub, adv.priv, *crypto);
    EXPECT_EQ(code_of([&] { validate_vuup(v, root.pub, *crypto); }), ErrorCode::InvalidCertificate);
}

TEST_P(MaterialsTest, StructurallyEqualVuupsShareDigest) {
    auto build = [&] {
        Rng r(5);
        auto c = make_backend(CryptoConfig{"mock", 32, 32});
        auto kp = c->generate_keypair(r);
        auto rt = c->generate_keypair(r);
        VuupParts p;
        p.pda_cert = issue_certificate("PDA", kp.pub, rt.priv, *c);
        p.pia_cert = issue_certificate("PIA", kp.pub, rt.priv, *c);
        Term part = Term::cipher(Scheme::Sym, r.bytes(8));
        Term signed_part = assemble_signed(part, sign_term(part, kp.priv, *c));
        auto dkm = c->generate_sym_key(SymKeyKind::Dkm, r);
        Term man = build_key_manifest(dkm, kp.pub, "p", SymKeyKind::Dkm, *c, r).to_term();
        Term signed_man = assemble_signed(man, sign_term(man, kp.priv, *c));
        p.enc_download_instructions = p.enc_installation_instructions = signed_part;
        p.dkm = p.ikm = signed_man;
        auto cert = issue_certificate("VCM", kp.pub, rt.priv, *c);
        return term_digest(build_vuup(p, kp.priv, cert, rt.pub, *c).to_term(), *c);
    };
    EXPECT_EQ(build(), build());
}

TEST_P(MaterialsTest, CanonicalCodecRoundTripsAndRejectsTruncation) {
    auto parts = honest_parts();
    auto vcm_cert = issue_certificate("VCM", vcm.pub, root.priv, *crypto);
    Vuup v = build_vuup(parts, vcm.priv, vcm_cert, root.pub, *crypto);
    Bytes enc = canonical_encode(v);
    auto back = std::get<Vuup>(canonical_decode(enc, MaterialType::Vuup));
    EXPECT_EQ(back.to_term(), v.to_term());
    Bytes cut(enc.begin(), enc.end() - 1);
    EXPECT_EQ(code_of([&] { canonical_decode(cut, MaterialType::Vuup); }), ErrorCode::MalformedEncoding);
    EXPECT_EQ(code_of([&] { canonical_decode(enc, MaterialType::Vso); }), ErrorCode::MalformedEncoding);

    Software sw{3, to_bytes("x")};
    EXPECT_EQ(std::get<Software>(canonical_decode(canonical_encode(sw), MaterialType::Software)), sw);
    Certificate cert = *parts.pda_cert;
    EXPECT_EQ(std::get<Certificate>(canonical_decode(canonical_encode(cert), MaterialType::Certificate)), cert);
}

TEST(MaterialKinds, NamesRoundTrip) {
    for (std::size_t i = 0; i < kMaterialKindCount; ++i) {
        auto k = static_cast<MaterialKind>(i);
        EXPECT_EQ(parse_material_kind(material_kind_name(k)), k);
    }
    EXPECT_FALSE(parse_material_kind("Nope"));
}

INSTANTIATE_TEST_SUITE_P(Backends, MaterialsTest, ::testing::Values("sodium", "mock"));
