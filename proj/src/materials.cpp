#include "unisuf/materials.hpp"

#include <array>

#include "unisuf/error.hpp"

namespace unisuf {

namespace {

constexpr std::array<std::string_view, kMaterialKindCount> kKindNames = {
    "Software",
    "SoftwareKey",
    "SoftwareHash",
    "SignedSoftwareHash",
    "SoftwareEncased",
    "SoftwareUrl",
    "Vso",
    "VinData",
    "SoftwareVersions",
    "SoftwareList",
    "DownloadInstructions",
    "DkmKey",
    "Dkm",
    "EncDownloadInstructions",
    "InstallationInstructions",
    "IkmKey",
    "Ikm",
    "EncInstallationInstructions",
    "MkmSecurityAccessKey",
    "MkmSoftwareKey",
    "SecurityAccessKey",
    "Mkm",
    "Ska",
    "SkaSecurityAccessEntry",
    "SkaSoftwareEntry",
    "VuupContent",
    "Vuup",
    "VuupUrl",
    "EcuChallenge",
    "ChallengeResponse",
    "RootCert",
    "SupplierCert",
    "VcmCert",
    "PdaCert",
    "PiaCert",
    "PsaCert",
    "CdaCert",
    "VehicleCert",
};

std::vector<Term> entries_to_terms(const std::vector<SoftwareListEntry>& entries) {
    std::vector<Term> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.to_term());
    return out;
}

std::vector<SoftwareListEntry> entries_from_term(const Term& t) {
    if (!t.is_record(Tag::Bundle)) fail(ErrorCode::MalformedEncoding, "expected entry bundle");
    std::vector<SoftwareListEntry> out;
    for (const auto& c : t.children()) out.push_back(SoftwareListEntry::from_term(c));
    return out;
}

std::vector<Term> ciphers_to_terms(const std::vector<CipherText>& cts) {
    std::vector<Term> out;
    for (const auto& c : cts) out.push_back(c.to_term());
    return out;
}

std::vector<CipherText> ciphers_from_term(const Term& t, Tag tag) {
    if (!t.is_record(tag)) fail(ErrorCode::MalformedEncoding, "expected key array section");
    std::vector<CipherText> out;
    for (const auto& c : t.children()) out.push_back(CipherText::from_term(c));
    return out;
}

Term expect_signed(const Term& t, std::string_view what) {
    if (!t.is_signed()) fail(ErrorCode::MalformedEncoding, std::string(what) + " must be signed");
    return t;
}

}  // namespace

std::string_view material_kind_name(MaterialKind k) { return kKindNames.at(static_cast<std::size_t>(k)); }

std::optional<MaterialKind> parse_material_kind(std::string_view name) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i)
        if (kKindNames[i] == name) return static_cast<MaterialKind>(i);
    return std::nullopt;
}

bool is_certificate_kind(MaterialKind k) {
    return k >= MaterialKind::RootCert && k <= MaterialKind::VehicleCert;
}

Term Software::to_term() const {
    return Term::record(Tag::Software, {Term::number(version), Term::data(content)});
}

Software Software::from_term(const Term& t) {
    const Term& r = t.expect_record(Tag::Software, 2);
    if (!r.child(1).is_atom(AtomKind::Data)) fail(ErrorCode::MalformedEncoding, "software content must be data");
    return Software{r.child(0).as_number(), r.child(1).bytes()};
}

Bytes Software::serialize() const {
    Bytes out;
    append_u64(out, version);
    append(out, content);
    return out;
}

Term sign_software(const Software& sw, const PrivateKey& supplier_sk, const CryptoBackend& crypto) {
    Term payload = sw.to_term();
    Bytes sig = sign_term(payload, supplier_sk, crypto);
    return assemble_signed(std::move(payload), std::move(sig));
}

CipherText encrypt_signed_software(const Term& sw_signed, const SymKey& key, const PublicKey& supplier_pk,
                                   const CryptoBackend& crypto, Rng& rng) {
    Software::from_term(verify_signed(sw_signed, supplier_pk, crypto));
    return crypto.sym_encrypt(sw_signed.encode(), key, rng);
}

Term encase_software(const Term& sw_signed, const SymKey& key, const PrivateKey& vcm_sk, const PublicKey& supplier_pk,
                     const CryptoBackend& crypto, Rng& rng) {
    Term inner = encrypt_signed_software(sw_signed, key, supplier_pk, crypto, rng).to_term();
    Bytes sig = sign_term(inner, vcm_sk, crypto);
    return assemble_signed(std::move(inner), std::move(sig));
}

Term open_encased_signed(const Term& encased, const SymKey& key, const PublicKey& vcm_pk, const PublicKey& supplier_pk,
                         const CryptoBackend& crypto) {
    if (!signature_valid(encased, vcm_pk, crypto))
        fail(ErrorCode::OuterSignatureInvalid, "encased software not signed by VCM");
    const Term& ct = encased.payload();
    if (!ct.is_cipher()) fail(ErrorCode::MalformedEncoding, "encased payload is not a ciphertext");
    Bytes plain = crypto.sym_decrypt(CipherText::from_term(ct), key);
    Term inner;
    try {
        inner = Term::decode(plain);
        Software::from_term(inner.payload());
    } catch (const Error&) {
        // Unauthenticated mode: a wrong key shows up as garbage that does not parse.
        fail(ErrorCode::DecryptFailure, "decrypted software does not parse");
    }
    if (!signature_valid(inner, supplier_pk, crypto))
        fail(ErrorCode::InnerSignatureInvalid, "software not signed by supplier");
    return inner;
}

Software open_encased(const Term& encased, const SymKey& key, const PublicKey& vcm_pk, const PublicKey& supplier_pk,
                      const CryptoBackend& crypto) {
    return Software::from_term(open_encased_signed(encased, key, vcm_pk, supplier_pk, crypto).payload());
}

Term KeyManifest::to_term() const {
    return Term::record(Tag::KeyManifest, {Term::number(static_cast<std::uint64_t>(kind)), wrapped_key.to_term(),
                                           Term::text(policy)});
}

KeyManifest KeyManifest::from_term(const Term& t) {
    const Term& r = t.expect_record(Tag::KeyManifest, 3);
    auto k = r.child(0).as_number();
    if (k < 1 || k > 6) fail(ErrorCode::MalformedEncoding, "unknown manifest kind");
    return KeyManifest{static_cast<SymKeyKind>(k), CipherText::from_term(r.child(1)), r.child(2).as_text()};
}

KeyManifest build_key_manifest(const SymKey& key, const PublicKey& vehicle_pk, std::string policy_name,
                               SymKeyKind kind, const CryptoBackend& crypto, Rng& rng) {
    if (key.kind != kind)
        fail(ErrorCode::KindMismatch, std::string(sym_key_kind_name(key.kind)) + " key given for " +
                                          std::string(sym_key_kind_name(kind)) + " manifest");
    if (kind == SymKeyKind::Software || kind == SymKeyKind::SecurityAccess)
        fail(ErrorCode::KindMismatch, "manifests wrap only DKM, IKM and MKM keys");
    return KeyManifest{kind, crypto.asym_encrypt(key.to_term().encode(), vehicle_pk, rng), std::move(policy_name)};
}

SymKey unwrap_key_manifest(const KeyManifest& manifest, const PrivateKey& vehicle_sk, const CryptoBackend& crypto) {
    Bytes plain = crypto.asym_decrypt(manifest.wrapped_key, vehicle_sk);
    SymKey key;
    try {
        key = SymKey::from_term(Term::decode(plain));
    } catch (const Error&) {
        fail(ErrorCode::DecryptFailure, "wrapped key does not parse");
    }
    if (key.kind != manifest.kind) fail(ErrorCode::KindMismatch, "wrapped key kind differs from manifest kind");
    return key;
}

Term MasterKeyManifest::to_term() const {
    return Term::record(Tag::Mkm, {security_access.to_term(), software.to_term()});
}

MasterKeyManifest MasterKeyManifest::from_term(const Term& t) {
    const Term& r = t.expect_record(Tag::Mkm, 2);
    MasterKeyManifest m{KeyManifest::from_term(r.child(0)), KeyManifest::from_term(r.child(1))};
    if (m.security_access.kind != SymKeyKind::MkmSecurityAccess || m.software.kind != SymKeyKind::MkmSoftware)
        fail(ErrorCode::KindMismatch, "MKM manifests out of order");
    return m;
}

Term SecureKeyArray::to_term() const {
    return Term::record(Tag::Ska, {Term::record(Tag::SkaSecurityAccess, ciphers_to_terms(security_access_entries)),
                                   Term::record(Tag::SkaSoftware, ciphers_to_terms(software_entries))});
}

SecureKeyArray SecureKeyArray::from_term(const Term& t) {
    const Term& r = t.expect_record(Tag::Ska, 2);
    return SecureKeyArray{ciphers_from_term(r.child(0), Tag::SkaSecurityAccess),
                          ciphers_from_term(r.child(1), Tag::SkaSoftware)};
}

SecureKeyArray build_ska(const std::vector<SymKey>& sa_keys, const std::vector<SymKey>& sw_keys,
                         const SymKey& mkm_sa_key, const SymKey& mkm_sw_key, const CryptoBackend& crypto, Rng& rng) {
    if (sa_keys.empty() || sw_keys.empty()) fail(ErrorCode::EmptyKeyList, "SKA needs at least one key per section");
    SecureKeyArray ska;
    for (const auto& k : sa_keys) ska.security_access_entries.push_back(crypto.auth_encrypt(k.to_term().encode(), mkm_sa_key, rng));
    for (const auto& k : sw_keys) ska.software_entries.push_back(crypto.auth_encrypt(k.to_term().encode(), mkm_sw_key, rng));
    return ska;
}

SymKey open_ska_entry(const CipherText& entry, const SymKey& master, const CryptoBackend& crypto) {
    return SymKey::from_term(Term::decode(crypto.auth_decrypt(entry, master)));
}

Term SoftwareListEntry::to_term() const {
    return Term::record(Tag::SoftwareListEntry, {Term::text(software_id), Term::number(version), Term::text(url)});
}

SoftwareListEntry SoftwareListEntry::from_term(const Term& t) {
    const Term& r = t.expect_record(Tag::SoftwareListEntry, 3);
    return SoftwareListEntry{r.child(0).as_text(), r.child(1).as_number(), r.child(2).as_text()};
}

Term Vso::to_term() const {
    std::vector<Term> versions;
    for (const auto& [id, v] : onboard_versions)
        versions.push_back(Term::record(Tag::VersionEntry, {Term::text(id), Term::number(v)}));
    return Term::record(Tag::Vso, {round, Term::text(vin), Term::record(Tag::Bundle, std::move(versions))});
}

Vso Vso::from_term(const Term& t) {
    const Term& r = t.expect_record(Tag::Vso, 3);
    Vso v{r.child(0), r.child(1).as_text(), {}};
    if (!r.child(2).is_record(Tag::Bundle)) fail(ErrorCode::MalformedEncoding, "expected version bundle");
    for (const auto& e : r.child(2).children()) {
        const Term& entry = e.expect_record(Tag::VersionEntry, 2);
        v.onboard_versions[entry.child(0).as_text()] = entry.child(1).as_number();
    }
    return v;
}

Term VinData::to_term() const { return Term::record(Tag::VinData, {Term::text(vin), Term::text(model)}); }

VinData VinData::from_term(const Term& t) {
    const Term& r = t.expect_record(Tag::VinData, 2);
    return VinData{r.child(0).as_text(), r.child(1).as_text()};
}

Term SoftwareVersions::to_term() const {
    return Term::record(Tag::SoftwareVersions, {Term::record(Tag::Bundle, entries_to_terms(latest))});
}

SoftwareVersions SoftwareVersions::from_term(const Term& t) {
    return SoftwareVersions{entries_from_term(t.expect_record(Tag::SoftwareVersions, 1).child(0))};
}

Term SoftwareList::to_term() const {
    return Term::record(Tag::SoftwareList,
                        {round, Term::text(vin), Term::record(Tag::Bundle, entries_to_terms(entries))});
}

SoftwareList SoftwareList::from_term(const Term& t) {
    const Term& r = t.expect_record(Tag::SoftwareList, 3);
    return SoftwareList{r.child(0), r.child(1).as_text(), entries_from_term(r.child(2))};
}

SoftwareList build_software_list(const Vso& vso, const VinData& vin_data, const SoftwareVersions& versions) {
    SoftwareList list{vso.round, vin_data.vin, {}};
    std::map<std::string, SoftwareListEntry> best;
    for (const auto& e : versions.latest) {
        auto it = best.find(e.software_id);
        if (it == best.end() || e.version > it->second.version) best[e.software_id] = e;
    }
    for (const auto& [id, e] : best) {
        auto onboard = vso.onboard_versions.find(id);
        std::uint64_t have = onboard == vso.onboard_versions.end() ? 0 : onboard->second;
        if (e.version > have) list.entries.push_back(e);
    }
    return list;
}

Term build_signed_software_list(const Vso& vso, const VinData& vin_data, const SoftwareVersions& versions,
                                const PrivateKey& vcm_sk, const CryptoBackend& crypto) {
    Term payload = build_software_list(vso, vin_data, versions).to_term();
    Bytes sig = sign_term(payload, vcm_sk, crypto);
    return assemble_signed(std::move(payload), std::move(sig));
}

Term DownloadInstructions::to_term() const {
    return Term::record(Tag::DownloadInstructions, {round, Term::record(Tag::Bundle, entries_to_terms(downloads))});
}

DownloadInstructions DownloadInstructions::from_term(const Term& t) {
    const Term& r = t.expect_record(Tag::DownloadInstructions, 2);
    return DownloadInstructions{r.child(0), entries_from_term(r.child(1))};
}

DownloadInstructions build_download_instructions(const SoftwareList& list) {
    return DownloadInstructions{list.round, list.entries};
}

Term InstallationInstructions::to_term() const {
    std::vector<Term> parts{software_list};
    if (complete()) {
        parts.push_back(*ska);
        parts.push_back(*mkm);
        parts.push_back(psa_cert->to_term());
    }
    return Term::record(Tag::InstallationInstructions, std::move(parts));
}

InstallationInstructions InstallationInstructions::from_term(const Term& t) {
    if (!t.is_record(Tag::InstallationInstructions) || (t.children().size() != 1 && t.children().size() != 4))
        fail(ErrorCode::MalformedEncoding, "expected installation instructions");
    InstallationInstructions ii{expect_signed(t.child(0), "software list"), {}, {}, {}};
    if (t.children().size() == 4) {
        ii.ska = expect_signed(t.child(1), "SKA");
        ii.mkm = expect_signed(t.child(2), "MKM");
        ii.psa_cert = Certificate::from_term(t.child(3));
    }
    return ii;
}

Term VuupContent::to_term() const {
    return Term::record(Tag::VuupContent,
                        {Term::record(Tag::CertificatePackage, {pda_cert.to_term(), pia_cert.to_term()}),
                         enc_download_instructions, dkm, enc_installation_instructions, ikm});
}

VuupContent VuupContent::from_term(const Term& t) {
    const Term& r = t.expect_record(Tag::VuupContent, 5);
    const Term& pkg = r.child(0).expect_record(Tag::CertificatePackage, 2);
    return VuupContent{Certificate::from_term(pkg.child(0)),
                       Certificate::from_term(pkg.child(1)),
                       expect_signed(r.child(1), "download instructions"),
                       expect_signed(r.child(2), "DKM"),
                       expect_signed(r.child(3), "installation instructions"),
                       expect_signed(r.child(4), "IKM")};
}

Term Vuup::to_term() const { return Term::record(Tag::Vuup, {vcm_cert.to_term(), content}); }

Vuup Vuup::from_term(const Term& t) {
    const Term& r = t.expect_record(Tag::Vuup, 2);
    return Vuup{Certificate::from_term(r.child(0)), expect_signed(r.child(1), "VUUP content")};
}

void validate_vuup_content(const VuupContent& c, const PublicKey& root_pk, const CryptoBackend& crypto) {
    PublicKey pda = validate_certificate(c.pda_cert, root_pk, crypto);
    PublicKey pia = validate_certificate(c.pia_cert, root_pk, crypto);
    auto check = [&](const Term& part, const PublicKey& pk, std::string_view name) {
        if (!signature_valid(part, pk, crypto)) fail(ErrorCode::PartSignatureInvalid, std::string(name));
    };
    check(c.enc_download_instructions, pda, "DownloadInstructions");
    check(c.dkm, pda, "DKM");
    check(c.enc_installation_instructions, pia, "InstallationInstructions");
    check(c.ikm, pia, "IKM");
    if (!c.enc_download_instructions.payload().is_cipher() || !c.enc_installation_instructions.payload().is_cipher())
        fail(ErrorCode::MalformedEncoding, "instructions must be encrypted");
    KeyManifest::from_term(c.dkm.payload());
    KeyManifest::from_term(c.ikm.payload());
}

VuupContent validate_vuup_parts(const VuupParts& p, const PublicKey& root_pk, const CryptoBackend& crypto) {
    auto need = [](const auto& opt, std::string_view name) -> const auto& {
        if (!opt) fail(ErrorCode::MissingPart, std::string(name));
        return *opt;
    };
    VuupContent c{need(p.pda_cert, "PDA_Cert"),
                  need(p.pia_cert, "PIA_Cert"),
                  need(p.enc_download_instructions, "DownloadInstructions"),
                  need(p.dkm, "DKM"),
                  need(p.enc_installation_instructions, "InstallationInstructions"),
                  need(p.ikm, "IKM")};
    validate_vuup_content(c, root_pk, crypto);
    return c;
}

Vuup build_vuup(const VuupParts& parts, const PrivateKey& vcm_sk, const Certificate& vcm_cert,
                const PublicKey& root_pk, const CryptoBackend& crypto) {
    Term content = validate_vuup_parts(parts, root_pk, crypto).to_term();
    Bytes sig = sign_term(content, vcm_sk, crypto);
    return Vuup{vcm_cert, assemble_signed(std::move(content), std::move(sig))};
}

VuupContent validate_vuup(const Vuup& vuup, const PublicKey& root_pk, const CryptoBackend& crypto) {
    PublicKey vcm = validate_certificate(vuup.vcm_cert, root_pk, crypto);
    VuupContent c = VuupContent::from_term(verify_signed(vuup.content, vcm, crypto));
    validate_vuup_content(c, root_pk, crypto);
    return c;
}

Bytes canonical_encode(const MaterialValue& m) {
    return std::visit(
        [](const auto& v) -> Bytes {
            if constexpr (std::is_same_v<std::decay_t<decltype(v)>, Term>)
                return v.encode();
            else
                return v.to_term().encode();
        },
        m);
}

MaterialValue canonical_decode(ByteView bytes, MaterialType type) {
    Term t = Term::decode(bytes);
    switch (type) {
        case MaterialType::Software: return Software::from_term(t);
        case MaterialType::SignedSoftware:
            Software::from_term(expect_signed(t, "software").payload());
            return t;
        case MaterialType::SoftwareEncased:
            if (!expect_signed(t, "encased software").payload().is_cipher())
                fail(ErrorCode::MalformedEncoding, "encased payload is not a ciphertext");
            return t;
        case MaterialType::KeyManifest: return KeyManifest::from_term(t);
        case MaterialType::MasterKeyManifest: return MasterKeyManifest::from_term(t);
        case MaterialType::SecureKeyArray: return SecureKeyArray::from_term(t);
        case MaterialType::DownloadInstructions: return DownloadInstructions::from_term(t);
        case MaterialType::InstallationInstructions: return InstallationInstructions::from_term(t);
        case MaterialType::Vuup: return Vuup::from_term(t);
        case MaterialType::VuupContent: return VuupContent::from_term(t);
        case MaterialType::Vso: return Vso::from_term(t);
        case MaterialType::SoftwareList: return SoftwareList::from_term(t);
        case MaterialType::Certificate: return Certificate::from_term(t);
    }
    fail(ErrorCode::MalformedEncoding, "unknown material type");
}

}  // namespace unisuf
