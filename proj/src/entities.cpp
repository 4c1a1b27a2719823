#include "unisuf/entities.hpp"

#include <algorithm>

#include "unisuf/error.hpp"

namespace unisuf {

using K = MaterialKind;
using SP = SubProblem;

// ================================================================ ECU

Bytes ecu_challenge(EcuState& e, Rng& rng) {
    e.pending_challenge = rng.bytes(16);
    return *e.pending_challenge;
}

UnlockResult ecu_verify_response(EcuState& e, ByteView response, const CryptoBackend& crypto) {
    if (!e.pending_challenge) return UnlockResult::Rejected;
    Bytes challenge = std::move(*e.pending_challenge);
    e.pending_challenge.reset();
    Bytes expected = crypto.challenge_response(challenge, e.security_access_key);
    if (expected.size() != response.size() || !std::equal(expected.begin(), expected.end(), response.begin()))
        return UnlockResult::Rejected;
    e.locked = false;
    e.unlocked_by = std::move(challenge);
    return UnlockResult::Unlocked;
}

InstallResult ecu_install(EcuState& e, const Term& sw_signed, const PublicKey& supplier_pk,
                          const CryptoBackend& crypto) {
    if (e.locked) return InstallResult{false, "Locked", 0};
    e.locked = true;
    e.unlocked_by.reset();
    if (!sw_signed.is_signed()) return InstallResult{false, "Malformed", 0};
    Software sw;
    try {
        sw = Software::from_term(sw_signed.payload());
    } catch (const Error&) {
        return InstallResult{false, "Malformed", 0};
    }
    if (!signature_valid(sw_signed, supplier_pk, crypto)) return InstallResult{false, "BadSignature", sw.version};
    if (sw.version <= e.installed_version) return InstallResult{false, "StaleVersion", sw.version};
    e.installed_version = sw.version;
    return InstallResult{true, "", sw.version};
}

// ================================================================ CSA

void CsaVault::associate(const std::string& ref, const Term& signed_manifest, const PublicKey& signer_pk,
                         const PrivateKey& vehicle_sk, std::string_view expected_policy,
                         const CryptoBackend& crypto) {
    KeyManifest m = KeyManifest::from_term(verify_signed(signed_manifest, signer_pk, crypto));
    if (m.policy != expected_policy)
        fail(ErrorCode::PolicyViolation, "manifest policy '" + m.policy + "' where '" +
                                             std::string(expected_policy) + "' is required");
    keys_[ref] = Entry{unwrap_key_manifest(m, vehicle_sk, crypto), m.policy};
}

void CsaVault::associate_mkm(const Term& signed_mkm, const PublicKey& psa_pk, const PrivateKey& vehicle_sk,
                             const CryptoBackend& crypto) {
    MasterKeyManifest mkm = MasterKeyManifest::from_term(verify_signed(signed_mkm, psa_pk, crypto));
    if (mkm.security_access.policy != policy::kUnwrapSecurityAccess ||
        mkm.security_access.kind != SymKeyKind::MkmSecurityAccess || mkm.software.policy != policy::kUnwrapSoftwareKey ||
        mkm.software.kind != SymKeyKind::MkmSoftware)
        fail(ErrorCode::PolicyViolation, "MKM manifests carry unexpected policies");
    SymKey sa = unwrap_key_manifest(mkm.security_access, vehicle_sk, crypto);
    SymKey sw = unwrap_key_manifest(mkm.software, vehicle_sk, crypto);
    keys_["mkm_sa"] = Entry{std::move(sa), mkm.security_access.policy};
    keys_["mkm_sw"] = Entry{std::move(sw), mkm.software.policy};
}

Bytes CsaVault::use(const std::string& ref, std::string_view operation, const Term& input,
                    const CryptoBackend& crypto) const {
    auto it = keys_.find(ref);
    if (it == keys_.end()) fail(ErrorCode::PolicyViolation, "no key associated as '" + ref + "'");
    const Entry& e = it->second;
    if (e.policy != operation)
        fail(ErrorCode::PolicyViolation,
             "key '" + ref + "' is bound to '" + e.policy + "', not '" + std::string(operation) + "'");
    if (operation == policy::kDecryptDownloadInstructions || operation == policy::kDecryptInstallationInstructions) {
        CipherText ct = CipherText::from_term(input);
        if (ct.scheme != Scheme::Sym) fail(ErrorCode::DecryptFailure, "instructions must be symmetrically encrypted");
        return crypto.sym_decrypt(ct, e.key);
    }
    if (operation == policy::kUnwrapSecurityAccess || operation == policy::kUnwrapSoftwareKey) {
        SymKey k = open_ska_entry(CipherText::from_term(input), e.key, crypto);
        const SymKeyKind want =
            operation == policy::kUnwrapSecurityAccess ? SymKeyKind::SecurityAccess : SymKeyKind::Software;
        if (k.kind != want) fail(ErrorCode::PolicyViolation, "SKA entry holds a key of the wrong kind");
        return k.to_term().encode();
    }
    fail(ErrorCode::PolicyViolation, "unknown operation '" + std::string(operation) + "'");
}

const SymKey* CsaVault::peek(const std::string& ref) const {
    auto it = keys_.find(ref);
    return it == keys_.end() ? nullptr : &it->second.key;
}

// ================================================================ plumbing

const Certificate& Directory::cert(const std::string& holder) const {
    auto it = certs.find(holder);
    if (it == certs.end()) fail(ErrorCode::ValidationFailure, "no certificate for " + holder);
    return it->second;
}

PublicKey Directory::key(const std::string& holder, const CryptoBackend& crypto) const {
    return validate_certificate(cert(holder), root_pk, crypto);
}

Term make_message(std::string_view step, std::vector<Term> items) {
    items.insert(items.begin(), Term::text(step));
    return Term::record(Tag::Message, std::move(items));
}

Term request_flag(std::string_view what) { return Term::record(Tag::Request, {Term::text(what)}); }
Term success_flag(std::string_view what) { return Term::record(Tag::Success, {Term::text(what)}); }

namespace {

[[noreturn]] void unexpected(const std::string& why) { fail(ErrorCode::UnexpectedMessage, why); }
[[noreturn]] void invalid(const std::string& why) { fail(ErrorCode::ValidationFailure, why); }

struct Msg {
    std::string step;
    const Term& t;
    const Envelope& env;

    const Term& item(std::size_t i) const {
        if (i + 1 >= t.children().size()) unexpected(step + ": missing item " + std::to_string(i));
        return t.child(i + 1);
    }
    bool from(Role r) const { return env.sender.role == r; }
};

EntityId peer(Role r, const RoundContext& ctx) {
    return EntityId{r, is_vehicle_role(r) ? ctx.round.vin : std::nullopt};
}

const std::string& vin_of(const RoundContext& ctx) {
    if (!ctx.round.vin) invalid("round carries no VIN");
    return *ctx.round.vin;
}

const PrivateKey& own_key(const EntityState& self) {
    if (!self.keys) fail(ErrorCode::ConfigError, self.id.name() + " has no key pair");
    return self.keys->priv;
}

Term sign_local(const Term& payload, const EntityState& self, const CryptoBackend& crypto) {
    return assemble_signed(payload, sign_term(payload, own_key(self), crypto));
}

// Validates a certificate against the root and checks who it was issued to.
PublicKey cert_key(const Term& cert_term, const std::string& holder, const Services& s) {
    Certificate c = Certificate::from_term(cert_term);
    if (c.holder_id != holder) invalid("certificate belongs to " + c.holder_id + ", expected " + holder);
    return validate_certificate(c, s.directory.root_pk, s.crypto);
}

// Attaches a signature returned by the PSS and checks it under our own key.
Term attach_signature(const Term& payload, const Term& sig, const EntityState& self, const Services& s) {
    if (!sig.is_atom(AtomKind::Signature)) invalid("signing service returned no signature");
    Term signed_term = assemble_signed(payload, sig.bytes());
    verify_signed(signed_term, self.keys->pub, s.crypto);
    return signed_term;
}

Term digest_term(const Term& t, const Services& s) { return term_digest(t, s.crypto).to_term(); }

const Term& scratch(const RoundContext& ctx, const std::string& key) {
    const Term* t = ctx.find_scratch(key);
    if (!t) unexpected("no " + key + " in progress");
    return *t;
}

Term vehicle_cert_term(const RoundContext& ctx, const Services& s) {
    return s.directory.cert("Vehicle[" + vin_of(ctx) + "]").to_term();
}

SymKey received_key(const Term& t, SymKeyKind want) {
    SymKey k = SymKey::from_term(t);
    if (k.kind != want) invalid("received key of kind " + std::string(sym_key_kind_name(k.kind)));
    return k;
}

// ---------------------------------------------------------------- producer side

void supplier(EntityState& self, RoundContext&, const Msg& m, Services&) {
    unexpected(self.id.name() + " does not listen for " + m.step);
}

void pls(EntityState& self, RoundContext& ctx, const Msg& m, Services& s) {
    if (m.step == "P1.2" && m.from(Role::Supplier)) {
        const Term& signed_sw = m.item(0);
        verify_signed(signed_sw, s.directory.key("Supplier", s.crypto), s.crypto);
        self.store["software"] = signed_sw;
        ctx.materials[K::Software] = signed_sw;
        s.emit(SP::SecureSoftwareFiles, 1, {s.ref(K::Software, signed_sw.payload())});
    } else if (m.step == "P2.1" && m.from(Role::VCM)) {
        auto it = self.store.find("software");
        if (it == self.store.end()) unexpected("no software stored");
        s.send(peer(Role::VCM, ctx), make_message("P2.2", {it->second}));
    } else {
        unexpected("PLS: " + m.step);
    }
}

void vcm(EntityState& self, RoundContext& ctx, const Msg& m, Services& s) {
    const auto& dir = s.directory;
    if (m.step == "P2.2" && m.from(Role::ProducerLocalStorage)) {
        verify_signed(m.item(0), dir.key("Supplier", s.crypto), s.crypto);
        ctx.materials[K::Software] = m.item(0);
        s.send(peer(Role::PSA, ctx), make_message("P3.1", {request_flag("SoftwareKey")}));
    } else if (m.step == "P3.2" && m.from(Role::PSA)) {
        SymKey key = received_key(m.item(0), SymKeyKind::Software);
        ctx.materials[K::SoftwareKey] = m.item(0);
        Term ct = encrypt_signed_software(ctx.get(K::Software), key, dir.key("Supplier", s.crypto), s.crypto, s.rng)
                      .to_term();
        ctx.scratch["ct"] = ct;
        Term h = digest_term(ct, s);
        s.register_material(K::SoftwareHash, h);
        s.emit(SP::SecureSoftwareFiles, 3, {s.ref(K::SoftwareHash, h)});
        s.send(peer(Role::PSS, ctx), make_message("P4.2", {h}));
    } else if (m.step == "P4.4" && m.from(Role::PSS)) {
        Term encased = attach_signature(scratch(ctx, "ct"), m.item(0), self, s);
        s.register_material(K::SoftwareEncased, encased);
        ctx.materials[K::SoftwareEncased] = encased;
        s.emit(SP::SecureSoftwareFiles, 5, {s.ref(K::SoftwareEncased, encased)});
    } else if (m.step == "P5.2" && m.from(Role::SoftwareRepository)) {
        ctx.materials[K::SoftwareUrl] = m.item(0);
        Software sw = Software::from_term(ctx.get(K::Software).payload());
        SoftwareListEntry entry{s.release.software_id, sw.version, m.item(0).as_text()};
        s.send(peer(Role::VinDatabase, ctx), make_message("P5.3", {entry.to_term()}));
    } else if (m.step == "P5.4" && m.from(Role::VinDatabase)) {
        s.send(peer(Role::CMS, ctx), make_message("P6.1", {ctx.get(K::SoftwareKey), ctx.get(K::SoftwareUrl)}));
    } else if (m.step == "P6.2" && m.from(Role::CMS)) {
        s.emit(SP::UploadSoftwareFiles, 4, {s.ref(K::SoftwareKey, ctx.get(K::SoftwareKey))});
    } else if (m.step == "E2.4" && m.from(Role::OrderAgent)) {
        const Term& vso = m.item(0);
        Vso v = Vso::from_term(verify_signed(vso, dir.key("CDA[" + vin_of(ctx) + "]", s.crypto), s.crypto));
        if (v.vin != vin_of(ctx) || v.round != ctx.round.to_term()) invalid("order belongs to another round");
        ctx.materials[K::Vso] = vso;
        s.emit(SP::OrderInitiation, 5, {s.ref(K::Vso, vso)});
    } else if (m.step == "E3.3" && m.from(Role::VinDatabase)) {
        const Term& vin_data = m.item(0);
        const Term& versions = m.item(1);
        const Term& vso = ctx.get(K::Vso);
        s.emit(SP::CreateSoftwareList, 1,
               {s.ref(K::VinData, vin_data), s.ref(K::SoftwareVersions, versions), s.ref(K::Vso, vso)});
        Term list = build_signed_software_list(Vso::from_term(vso.payload()), VinData::from_term(vin_data),
                                               SoftwareVersions::from_term(versions), own_key(self), s.crypto);
        if (SoftwareList::from_term(list.payload()).entries.empty()) invalid("no update available for this vehicle");
        s.register_material(K::SoftwareList, list);
        ctx.materials[K::SoftwareList] = list;
        s.emit(SP::CreateSoftwareList, 2, {s.ref(K::SoftwareList, list)});
        std::vector<std::pair<Role, int>> targets = {{Role::PDA, 3}, {Role::PIA, 4}, {Role::PSA, 5}};
        s.rng.shuffle(targets.begin(), targets.end());
        for (auto [role, label] : targets) {
            s.emit(SP::CreateSoftwareList, label, {s.ref(K::SoftwareList, list)});
            s.send(peer(role, ctx), make_message("E3.6", {list, dir.cert("VCM").to_term()}));
        }
    } else if (m.step == "E3.6a" &&
               (m.from(Role::PDA) || m.from(Role::PIA) || m.from(Role::PSA))) {
        ctx.scratch["ack:" + std::string(role_name(m.env.sender.role))] = m.item(0);
        if (ctx.scratch.count("ack:PDA") && ctx.scratch.count("ack:PIA") && ctx.scratch.count("ack:PSA"))
            s.emit(SP::CreateSoftwareList, 6, {s.ref(K::SoftwareList, ctx.get(K::SoftwareList))});
    } else if (m.step == "E8.2" && (m.from(Role::PDA) || m.from(Role::PIA))) {
        const bool pda = m.from(Role::PDA);
        const std::string p = pda ? "pda:" : "pia:";
        ctx.scratch[p + "enc"] = m.item(0);
        ctx.scratch[p + "km"] = m.item(1);
        if (pda)
            s.emit(SP::PackageTheInstructions, 1,
                   {s.ref(K::EncDownloadInstructions, m.item(0)), s.ref(K::Dkm, m.item(1))});
        else
            s.emit(SP::PackageTheInstructions, 2,
                   {s.ref(K::EncInstallationInstructions, m.item(0)), s.ref(K::Ikm, m.item(1))});
        if (ctx.find_scratch("pda:enc") && ctx.find_scratch("pia:enc"))
            s.send(peer(Role::CMS, ctx),
                   make_message("E8.3", {request_flag("PDA_Cert"), request_flag("PIA_Cert")}));
    } else if (m.step == "E8.4" && m.from(Role::CMS)) {
        s.emit(SP::PackageTheInstructions, 3, {s.ref(K::PdaCert, m.item(0)), s.ref(K::PiaCert, m.item(1))});
        VuupParts parts;
        parts.pda_cert = Certificate::from_term(m.item(0));
        parts.pia_cert = Certificate::from_term(m.item(1));
        if (parts.pda_cert->holder_id != "PDA" || parts.pia_cert->holder_id != "PIA")
            invalid("CMS returned certificates for the wrong holders");
        parts.enc_download_instructions = scratch(ctx, "pda:enc");
        parts.dkm = scratch(ctx, "pda:km");
        parts.enc_installation_instructions = scratch(ctx, "pia:enc");
        parts.ikm = scratch(ctx, "pia:km");
        Term content = validate_vuup_parts(parts, dir.root_pk, s.crypto).to_term();
        s.register_material(K::VuupContent, content);
        ctx.scratch["content"] = content;
        s.emit(SP::PackageTheInstructions, 4, {s.ref(K::VuupContent, content)});
        s.send(peer(Role::PSS, ctx), make_message("E8.10", {digest_term(content, s)}));
    } else if (m.step == "E8.12" && m.from(Role::PSS)) {
        Term signed_content = attach_signature(scratch(ctx, "content"), m.item(0), self, s);
        Term vuup = Vuup{dir.cert("VCM"), signed_content}.to_term();
        s.register_material(K::Vuup, vuup);
        ctx.materials[K::Vuup] = vuup;
        s.emit(SP::PackageTheInstructions, 6, {s.ref(K::Vuup, vuup)});
        s.send(peer(Role::VehicleCloudService, ctx), make_message("E8.13", {vuup}));
    } else if (m.step == "E8.14" && m.from(Role::VehicleCloudService)) {
        const Term& url = m.item(1);
        if (!url.is_atom(AtomKind::Text)) invalid("VUUP URL is not text");
        ctx.materials[K::VuupUrl] = url;
        s.emit(SP::PackageTheInstructions, 7, {s.ref(K::Vuup, ctx.get(K::Vuup)), s.ref(K::VuupUrl, url)});
    } else {
        unexpected("VCM: " + m.step);
    }
}

void pss(EntityState& self, RoundContext& ctx, const Msg& m, Services& s) {
    struct Job {
        const char* step;
        const char* reply;
        Role owner;
        SP sp;
        int sign_label;
        int send_label;  // 0 when signing and returning are one label
        K kind;
    };
    static const Job jobs[] = {
        {"P4.2", "P4.4", Role::VCM, SP::SecureSoftwareFiles, 4, 0, K::SignedSoftwareHash},
        {"E4.12", "E4.13", Role::PDA, SP::CreateDownloadInstructions, 7, 8, K::EncDownloadInstructions},
        {"E4.15", "E4.16", Role::PDA, SP::CreateDownloadInstructions, 9, 10, K::Dkm},
        {"E6.10", "E6.11", Role::PSA, SP::GenerateInstallationMaterials, 6, 7, K::Ska},
        {"E6.13", "E6.14", Role::PSA, SP::GenerateInstallationMaterials, 8, 9, K::Mkm},
        {"E7.13", "E7.14", Role::PIA, SP::CreateInstallationInstructions, 8, 9, K::EncInstallationInstructions},
        {"E7.16", "E7.17", Role::PIA, SP::CreateInstallationInstructions, 10, 11, K::Ikm},
        {"E8.10", "E8.12", Role::VCM, SP::PackageTheInstructions, 5, 0, K::VuupContent},
    };
    for (const auto& j : jobs) {
        if (m.step != j.step) continue;
        if (!m.from(j.owner)) unexpected("PSS: " + m.step + " from the wrong party");
        const Term& h = m.item(0);
        if (!h.is_atom(AtomKind::Digest)) invalid("PSS expects a digest");
        auto key = self.delegated.find(j.owner);
        if (key == self.delegated.end()) fail(ErrorCode::ConfigError, "PSS holds no key for the requester");
        Digest d{h.bytes()};
        Term sig = Term::atom(AtomKind::Signature, s.crypto.sign_hash(d, key->second));
        if (j.kind == K::SignedSoftwareHash) {
            s.register_material(K::SignedSoftwareHash, sig);
            s.emit(j.sp, j.sign_label, {s.ref(K::SignedSoftwareHash, sig)});
        } else {
            // The digest is the requester's material digest, so the event
            // names the material itself.
            s.emit(j.sp, j.sign_label, {MaterialRef{j.kind, d}});
            if (j.send_label) s.emit(j.sp, j.send_label, {MaterialRef{j.kind, d}});
        }
        s.send(peer(j.owner, ctx), make_message(j.reply, {sig}));
        return;
    }
    unexpected("PSS: " + m.step);
}

void psa(EntityState& self, RoundContext& ctx, const Msg& m, Services& s) {
    auto fresh_key = [&](SymKeyKind kind, K material) {
        Term t = s.crypto.generate_sym_key(kind, s.rng).to_term();
        s.register_material(material, t);
        ctx.materials[material] = t;
        return t;
    };
    if (m.step == "P3.1" && m.from(Role::VCM)) {
        Term key = fresh_key(SymKeyKind::Software, K::SoftwareKey);
        s.emit(SP::SecureSoftwareFiles, 2, {s.ref(K::SoftwareKey, key)});
        s.send(peer(Role::VCM, ctx), make_message("P3.2", {key}));
    } else if (m.step == "E3.6" && m.from(Role::VCM)) {
        ctx.materials[K::SoftwareList] = m.item(0);
        ctx.materials[K::VcmCert] = m.item(1);
        s.send(peer(Role::VCM, ctx), make_message("E3.6a", {success_flag("SoftwareList")}));
    } else if (m.step == "E4.3" && m.from(Role::PDA)) {
        Term key = fresh_key(SymKeyKind::Dkm, K::DkmKey);
        s.emit(SP::CreateDownloadInstructions, 3, {s.ref(K::DkmKey, key)});
        s.emit(SP::CreateDownloadInstructions, 4, {s.ref(K::DkmKey, key)});
        s.send(peer(Role::PDA, ctx), make_message("E4.4", {key}));
    } else if (m.step == "E6.3" && m.from(Role::CMS)) {
        PublicKey vehicle_pk = cert_key(m.item(0), "Vehicle[" + vin_of(ctx) + "]", s);
        std::vector<SymKey> sa_keys, sw_keys;
        for (const auto& k : m.item(1).expect_record(Tag::Bundle, m.item(1).children().size()).children())
            sa_keys.push_back(received_key(k, SymKeyKind::SecurityAccess));
        for (const auto& k : m.item(2).expect_record(Tag::Bundle, m.item(2).children().size()).children())
            sw_keys.push_back(received_key(k, SymKeyKind::Software));
        Term sa_t = fresh_key(SymKeyKind::MkmSecurityAccess, K::MkmSecurityAccessKey);
        Term sw_t = fresh_key(SymKeyKind::MkmSoftware, K::MkmSoftwareKey);
        s.emit(SP::GenerateInstallationMaterials, 3,
               {s.ref(K::MkmSecurityAccessKey, sa_t), s.ref(K::MkmSoftwareKey, sw_t)});
        SymKey mkm_sa = SymKey::from_term(sa_t), mkm_sw = SymKey::from_term(sw_t);
        Term mkm = MasterKeyManifest{build_key_manifest(mkm_sa, vehicle_pk, std::string(policy::kUnwrapSecurityAccess),
                                                        SymKeyKind::MkmSecurityAccess, s.crypto, s.rng),
                                     build_key_manifest(mkm_sw, vehicle_pk, std::string(policy::kUnwrapSoftwareKey),
                                                        SymKeyKind::MkmSoftware, s.crypto, s.rng)}
                       .to_term();
        s.register_material(K::Mkm, mkm);
        ctx.scratch["mkm"] = mkm;
        s.emit(SP::GenerateInstallationMaterials, 4, {s.ref(K::Mkm, mkm)});
        SecureKeyArray ska = build_ska(sa_keys, sw_keys, mkm_sa, mkm_sw, s.crypto, s.rng);
        Term ska_t = ska.to_term();
        s.register_material(K::Ska, ska_t);
        for (const auto& e : ska.security_access_entries) s.register_material(K::SkaSecurityAccessEntry, e.to_term());
        for (const auto& e : ska.software_entries) s.register_material(K::SkaSoftwareEntry, e.to_term());
        ctx.scratch["ska"] = ska_t;
        s.emit(SP::GenerateInstallationMaterials, 5, {s.ref(K::Ska, ska_t)});
        s.send(peer(Role::PSS, ctx), make_message("E6.10", {digest_term(ska_t, s)}));
    } else if (m.step == "E6.11" && m.from(Role::PSS)) {
        Term signed_ska = attach_signature(scratch(ctx, "ska"), m.item(0), self, s);
        s.register_material(K::Ska, signed_ska);
        ctx.materials[K::Ska] = signed_ska;
        s.send(peer(Role::PSS, ctx), make_message("E6.13", {digest_term(scratch(ctx, "mkm"), s)}));
    } else if (m.step == "E6.14" && m.from(Role::PSS)) {
        Term signed_mkm = attach_signature(scratch(ctx, "mkm"), m.item(0), self, s);
        s.register_material(K::Mkm, signed_mkm);
        ctx.materials[K::Mkm] = signed_mkm;
    } else if (m.step == "E7.1" && m.from(Role::PIA)) {
        const Term& mkm = ctx.get(K::Mkm);
        const Term& ska = ctx.get(K::Ska);
        s.emit(SP::CreateInstallationInstructions, 3, {s.ref(K::Mkm, mkm), s.ref(K::Ska, ska)});
        s.send(peer(Role::PIA, ctx), make_message("E7.2", {mkm, ska, s.directory.cert("PSA").to_term()}));
    } else if (m.step == "E7.4" && m.from(Role::PIA)) {
        Term key = fresh_key(SymKeyKind::Ikm, K::IkmKey);
        s.emit(SP::CreateInstallationInstructions, 4, {s.ref(K::IkmKey, key)});
        s.emit(SP::CreateInstallationInstructions, 5, {s.ref(K::IkmKey, key)});
        s.send(peer(Role::PIA, ctx), make_message("E7.5", {key}));
    } else {
        unexpected("PSA: " + m.step);
    }
}

void cms(EntityState& self, RoundContext& ctx, const Msg& m, Services& s) {
    auto stored = [&](const std::string& key) -> const Term& {
        auto it = self.store.find(key);
        if (it == self.store.end()) invalid("CMS has no " + key);
        return it->second;
    };
    if (m.step == "P6.1" && m.from(Role::VCM)) {
        received_key(m.item(0), SymKeyKind::Software);
        self.store["swkey:" + m.item(1).as_text()] = m.item(0);
        ctx.materials[K::SoftwareKey] = m.item(0);
        s.emit(SP::UploadSoftwareFiles, 3, {s.ref(K::SoftwareKey, m.item(0))});
        s.send(peer(Role::VCM, ctx), make_message("P6.2", {success_flag("SoftwareKey")}));
    } else if ((m.step == "E4.6" && m.from(Role::PDA)) || (m.step == "E7.7" && m.from(Role::PIA))) {
        Term cert = vehicle_cert_term(ctx, s);
        const bool pda = m.step == "E4.6";
        if (pda)
            s.emit(SP::CreateDownloadInstructions, 5, {s.ref(K::VehicleCert, cert)});
        else
            s.emit(SP::CreateInstallationInstructions, 6, {s.ref(K::VehicleCert, cert)});
        s.send(peer(m.env.sender.role, ctx), make_message(pda ? "E4.7" : "E7.8", {cert}));
    } else if (m.step == "E6.2" && m.from(Role::PSA)) {
        const Term& list_t = m.item(0);
        SoftwareList list =
            SoftwareList::from_term(verify_signed(list_t, s.directory.key("VCM", s.crypto), s.crypto));
        Term cert = vehicle_cert_term(ctx, s);
        Term sa = stored("sakey:" + vin_of(ctx));
        std::vector<Term> sw;
        std::vector<MaterialRef> refs = {s.ref(K::SoftwareList, list_t), s.ref(K::VehicleCert, cert)};
        for (const auto& e : list.entries) {
            sw.push_back(stored("swkey:" + e.url));
            refs.push_back(s.ref(K::SoftwareKey, sw.back()));
        }
        refs.push_back(s.ref(K::SecurityAccessKey, sa));
        s.emit(SP::GenerateInstallationMaterials, 2, std::move(refs));
        s.send(peer(Role::PSA, ctx), make_message("E6.3", {cert, Term::record(Tag::Bundle, {sa}),
                                                           Term::record(Tag::Bundle, std::move(sw))}));
    } else if (m.step == "E8.3" && m.from(Role::VCM)) {
        s.send(peer(Role::VCM, ctx), make_message("E8.4", {s.directory.cert("PDA").to_term(),
                                                           s.directory.cert("PIA").to_term()}));
    } else {
        unexpected("CMS: " + m.step);
    }
}

// PDA and PIA follow the same pattern with different materials.
struct AgentKinds {
    Role role;
    SP sp;
    K instructions, key, manifest, encrypted;
    SymKeyKind key_kind;
    std::string_view policy;
    const char *req_key, *key_reply, *req_cert, *cert_reply, *sign_enc, *enc_reply, *sign_km, *km_reply;
    int manifest_label;
};

const AgentKinds kPda{Role::PDA, SP::CreateDownloadInstructions, K::DownloadInstructions, K::DkmKey, K::Dkm,
                      K::EncDownloadInstructions, SymKeyKind::Dkm, policy::kDecryptDownloadInstructions,
                      "E4.3", "E4.4", "E4.6", "E4.7", "E4.12", "E4.13", "E4.15", "E4.16", 6};
const AgentKinds kPia{Role::PIA, SP::CreateInstallationInstructions, K::InstallationInstructions, K::IkmKey,
                      K::Ikm, K::EncInstallationInstructions, SymKeyKind::Ikm,
                      policy::kDecryptInstallationInstructions,
                      "E7.4", "E7.5", "E7.7", "E7.8", "E7.13", "E7.14", "E7.16", "E7.17", 7};

void agent(const AgentKinds& a, EntityState& self, RoundContext& ctx, const Msg& m, Services& s) {
    if (m.step == "E3.6" && m.from(Role::VCM)) {
        ctx.materials[K::SoftwareList] = m.item(0);
        ctx.materials[K::VcmCert] = m.item(1);
        s.send(peer(Role::VCM, ctx), make_message("E3.6a", {success_flag("SoftwareList")}));
    } else if (a.role == Role::PIA && m.step == "E7.2" && m.from(Role::PSA)) {
        PublicKey psa_pk = cert_key(m.item(2), "PSA", s);
        verify_signed(m.item(0), psa_pk, s.crypto);
        verify_signed(m.item(1), psa_pk, s.crypto);
        InstallationInstructions ii = InstallationInstructions::from_term(scratch(ctx, "base"));
        ii.mkm = m.item(0);
        ii.ska = m.item(1);
        ii.psa_cert = Certificate::from_term(m.item(2));
        Term full = ii.to_term();
        s.register_material(K::InstallationInstructions, full);
        ctx.materials[K::InstallationInstructions] = full;
        s.send(peer(Role::PSA, ctx), make_message(a.req_key, {request_flag("IKM_Key")}));
    } else if (m.step == a.key_reply && m.from(Role::PSA)) {
        received_key(m.item(0), a.key_kind);
        ctx.materials[a.key] = m.item(0);
        s.send(peer(Role::CMS, ctx), make_message(a.req_cert, {request_flag("Vehicle_Cert")}));
    } else if (m.step == a.cert_reply && m.from(Role::CMS)) {
        PublicKey vehicle_pk = cert_key(m.item(0), "Vehicle[" + vin_of(ctx) + "]", s);
        SymKey key = SymKey::from_term(ctx.get(a.key));
        Term ct = s.crypto.sym_encrypt(ctx.get(a.instructions).encode(), key, s.rng).to_term();
        s.register_material(a.encrypted, ct);
        Term km = build_key_manifest(key, vehicle_pk, std::string(a.policy), a.key_kind, s.crypto, s.rng).to_term();
        s.register_material(a.manifest, km);
        ctx.scratch["enc"] = ct;
        ctx.scratch["km"] = km;
        s.emit(a.sp, a.manifest_label, {s.ref(a.manifest, km)});
        s.send(peer(Role::PSS, ctx), make_message(a.sign_enc, {digest_term(ct, s)}));
    } else if (m.step == a.enc_reply && m.from(Role::PSS)) {
        Term signed_ct = attach_signature(scratch(ctx, "enc"), m.item(0), self, s);
        s.register_material(a.encrypted, signed_ct);
        ctx.materials[a.encrypted] = signed_ct;
        s.send(peer(Role::PSS, ctx), make_message(a.sign_km, {digest_term(scratch(ctx, "km"), s)}));
    } else if (m.step == a.km_reply && m.from(Role::PSS)) {
        Term signed_km = attach_signature(scratch(ctx, "km"), m.item(0), self, s);
        s.register_material(a.manifest, signed_km);
        ctx.materials[a.manifest] = signed_km;
    } else if (m.step == "E8.1" && m.from(Role::VCM)) {
        s.send(peer(Role::VCM, ctx),
               make_message("E8.2", {ctx.get(a.encrypted), ctx.get(a.manifest),
                                     s.directory.cert(std::string(role_name(a.role))).to_term()}));
    } else {
        unexpected(std::string(role_name(a.role)) + ": " + m.step);
    }
}

void vin_db(EntityState& self, RoundContext& ctx, const Msg& m, Services& s) {
    if (m.step == "P5.3" && m.from(Role::VCM)) {
        SoftwareListEntry entry = SoftwareListEntry::from_term(m.item(0));
        SoftwareVersions versions = SoftwareVersions::from_term(self.store.at("versions"));
        auto it = std::find_if(versions.latest.begin(), versions.latest.end(),
                               [&](const SoftwareListEntry& e) { return e.software_id == entry.software_id; });
        if (it == versions.latest.end())
            versions.latest.push_back(entry);
        else if (entry.version > it->version)
            *it = entry;
        self.store["versions"] = versions.to_term();
        s.emit(SP::UploadSoftwareFiles, 2, {s.ref(K::SoftwareUrl, Term::text(entry.url))});
        s.send(peer(Role::VCM, ctx), make_message("P5.4", {success_flag("SoftwareUrl")}));
    } else if (m.step == "E3.2" && m.from(Role::VCM)) {
        const std::string vin = m.item(0).as_text();
        if (vin != vin_of(ctx)) invalid("VIN query for another vehicle");
        auto data = self.store.find("vindata:" + vin);
        if (data == self.store.end()) invalid("unknown VIN " + vin);
        const Term& versions = self.store.at("versions");
        s.register_material(K::VinData, data->second);
        s.register_material(K::SoftwareVersions, versions);
        s.send(peer(Role::VCM, ctx), make_message("E3.3", {data->second, versions}));
    } else {
        unexpected("VinDB: " + m.step);
    }
}

std::uint64_t bump(EntityState& self, const std::string& counter) {
    auto it = self.store.find(counter);
    std::uint64_t n = it == self.store.end() ? 1 : it->second.as_number() + 1;
    self.store[counter] = Term::number(n);
    return n;
}

void repository(EntityState& self, RoundContext& ctx, const Msg& m, Services& s) {
    if (m.step == "P5.1" && m.from(Role::VCM)) {
        const Term& encased = m.item(0);
        verify_signed(encased, s.directory.key("VCM", s.crypto), s.crypto);
        std::string url = "sr://" + s.release.software_id + "/" + term_digest(encased, s.crypto).hex().substr(0, 16) +
                          "/" + std::to_string(bump(self, "counter"));
        Term url_t = Term::text(url);
        s.register_material(K::SoftwareUrl, url_t);
        self.store["url:" + url] = encased;
        ctx.materials[K::SoftwareEncased] = encased;
        s.emit(SP::UploadSoftwareFiles, 1, {s.ref(K::SoftwareEncased, encased)});
        s.send(peer(Role::VCM, ctx), make_message("P5.2", {url_t}));
    } else if (m.step == "D9.1" && m.from(Role::CDA)) {
        auto it = self.store.find("url:" + m.item(0).as_text());
        if (it == self.store.end()) invalid("repository has nothing at " + m.item(0).as_text());
        s.emit(SP::DownloadSoftwareFiles, 4, {s.ref(K::SoftwareEncased, it->second)});
        s.send(peer(Role::CDA, ctx), make_message("D9.2", {it->second}));
    } else {
        unexpected("SR: " + m.step);
    }
}

void ocs(EntityState& self, RoundContext& ctx, const Msg& m, Services& s) {
    const std::string queue = "vso:" + vin_of(ctx);
    if (m.step == "E1.3" && m.from(Role::CDA)) {
        verify_signed(m.item(0), s.directory.key("CDA[" + vin_of(ctx) + "]", s.crypto), s.crypto);
        self.queues[queue].push_back(m.item(0));
        s.emit(SP::OrderInitiation, 2, {s.ref(K::Vso, m.item(0))});
    } else if (m.step == "E2.1" && m.from(Role::OrderAgent)) {
        auto& q = self.queues[queue];
        if (q.empty()) unexpected("no queued order for " + vin_of(ctx));
        Term vso = q.front();
        q.pop_front();
        s.send(peer(Role::OrderAgent, ctx), make_message("E2.2", {vso}));
    } else if (m.step == "E10.2" && m.from(Role::OrderAgent)) {
        const Term& url = verify_signed(m.item(0), s.directory.key("VCM", s.crypto), s.crypto);
        ctx.materials[K::VuupUrl] = url;
        ctx.scratch["signed_url"] = m.item(0);
        s.send(peer(Role::OrderAgent, ctx), make_message("E10.3", {success_flag("VUUP_URL")}));
    } else if (m.step == "E11.1" && m.from(Role::CDA)) {
        if (!ctx.has(K::VuupUrl)) unexpected("order not ready");
        Term cert = s.directory.cert("VCM").to_term();
        std::vector<MaterialRef> refs = {s.ref(K::VuupUrl, ctx.get(K::VuupUrl)), s.ref(K::VcmCert, cert)};
        s.emit(SP::NotifyOrderReady, 4, refs);
        s.emit(SP::DownloadVuup, 1, refs);
        s.send(peer(Role::CDA, ctx), make_message("E11.2", {scratch(ctx, "signed_url"), cert}));
    } else {
        unexpected("OCS: " + m.step);
    }
}

void order_agent(EntityState&, RoundContext& ctx, const Msg& m, Services& s) {
    if (m.step == "E2.2" && m.from(Role::OrderCloudService)) {
        const Term& vso = m.item(0);
        verify_signed(vso, s.directory.key("CDA[" + vin_of(ctx) + "]", s.crypto), s.crypto);
        s.emit(SP::OrderInitiation, 3, {s.ref(K::Vso, vso)});
        s.emit(SP::OrderInitiation, 4, {s.ref(K::Vso, vso)});
        s.send(peer(Role::VCM, ctx), make_message("E2.4", {vso}));
    } else if (m.step == "E9" && m.from(Role::VCM)) {
        const Term& url = verify_signed(m.item(0), s.directory.key("VCM", s.crypto), s.crypto);
        s.emit(SP::NotifyOrderReady, 2, {s.ref(K::VuupUrl, url)});
        s.send(peer(Role::OrderCloudService, ctx), make_message("E10.2", {m.item(0)}));
    } else if (m.step == "E10.3" && m.from(Role::OrderCloudService)) {
        // Upload confirmed; nothing further for the agent.
    } else {
        unexpected("OA: " + m.step);
    }
}

void vcs(EntityState& self, RoundContext& ctx, const Msg& m, Services& s) {
    if (m.step == "E8.13" && m.from(Role::VCM)) {
        const Term& vuup = m.item(0);
        validate_vuup(Vuup::from_term(vuup), s.directory.root_pk, s.crypto);
        Term url = Term::text("vcs://vuup/" + vin_of(ctx) + "/" + std::to_string(bump(self, "counter")));
        s.register_material(K::VuupUrl, url);
        self.store["vuup:" + url.as_text()] = Term::record(Tag::Bundle, {vuup, ctx.round.to_term()});
        ctx.materials[K::Vuup] = vuup;
        s.send(peer(Role::VCM, ctx), make_message("E8.14", {success_flag("VUUP"), url}));
    } else if (m.step == "D2.1" && m.from(Role::CDA)) {
        auto it = self.store.find("vuup:" + m.item(0).as_text());
        if (it == self.store.end()) invalid("no VUUP at " + m.item(0).as_text());
        if (it->second.child(1) != ctx.round.to_term()) unexpected("VUUP belongs to another round");
        const Term& vuup = it->second.child(0);
        s.emit(SP::DownloadVuup, 3, {s.ref(K::Vuup, vuup)});
        s.send(peer(Role::CDA, ctx), make_message("D2.2", {vuup}));
    } else {
        unexpected("VCS: " + m.step);
    }
}

// ---------------------------------------------------------------- consumer side

void cls(EntityState& self, RoundContext& ctx, const Msg& m, Services& s) {
    if (m.step == "D2.3" && m.from(Role::CDA)) {
        self.store["vuup"] = m.item(0);
        ctx.materials[K::Vuup] = m.item(0);
        s.emit(SP::DownloadVuup, 4, {s.ref(K::Vuup, m.item(0))});
        s.send(peer(Role::CDA, ctx), make_message("D2.4", {success_flag("VUUP")}));
    } else if (m.step == "D9.3" && m.from(Role::CDA)) {
        ctx.materials[K::SoftwareEncased] = m.item(0);
        s.emit(SP::DownloadSoftwareFiles, 5, {s.ref(K::SoftwareEncased, m.item(0))});
        s.send(peer(Role::CDA, ctx), make_message("D9.4", {success_flag("Software")}));
    } else if (m.step == "D17.10" && m.from(Role::CIA)) {
        const Term& encased = ctx.get(K::SoftwareEncased);
        s.emit(SP::StreamUpdateToEcu, 5, {s.ref(K::SoftwareEncased, encased)});
        s.send(peer(Role::CIA, ctx), make_message("D17.11", {encased}));
    } else {
        unexpected("CLS: " + m.step);
    }
}

void cda(EntityState&, RoundContext& ctx, const Msg& m, Services& s) {
    const auto& dir = s.directory;
    if (m.step == "E11.2" && m.from(Role::OrderCloudService)) {
        ctx.materials[K::VuupUrl] = m.item(0);
        ctx.materials[K::VcmCert] = m.item(1);
    } else if (m.step == "D2.2" && m.from(Role::VehicleCloudService)) {
        ctx.scratch["vuup"] = m.item(0);
        s.send(peer(Role::ConsumerLocalStorage, ctx), make_message("D2.3", {m.item(0)}));
    } else if (m.step == "D2.4" && m.from(Role::ConsumerLocalStorage)) {
        Vuup vuup = Vuup::from_term(scratch(ctx, "vuup"));
        if (vuup.vcm_cert.to_term() != ctx.get(K::VcmCert)) invalid("VUUP signed under an unexpected VCM certificate");
        VuupContent c = validate_vuup(vuup, dir.root_pk, s.crypto);
        s.emit(SP::DownloadVuup, 5,
               {s.ref(K::EncDownloadInstructions, c.enc_download_instructions), s.ref(K::Dkm, c.dkm),
                s.ref(K::EncInstallationInstructions, c.enc_installation_instructions), s.ref(K::Ikm, c.ikm)});
        ctx.materials[K::EncDownloadInstructions] = c.enc_download_instructions;
        ctx.materials[K::Dkm] = c.dkm;
        ctx.materials[K::PdaCert] = c.pda_cert.to_term();
        ctx.materials[K::EncInstallationInstructions] = c.enc_installation_instructions;
        ctx.materials[K::Ikm] = c.ikm;
        ctx.materials[K::PiaCert] = c.pia_cert.to_term();
    } else if (m.step == "D6.4" && m.from(Role::CSA)) {
        s.send(peer(Role::CSA, ctx), make_message("D7", {ctx.get(K::EncDownloadInstructions)}));
    } else if (m.step == "D8.3" && m.from(Role::CSA)) {
        DownloadInstructions di = DownloadInstructions::from_term(m.item(0));
        if (di.round != ctx.round.to_term()) invalid("download instructions belong to another round");
        if (di.downloads.empty()) invalid("download instructions list nothing");
        ctx.materials[K::DownloadInstructions] = m.item(0);
        s.emit(SP::DownloadSoftwareFiles, 3, {s.ref(K::DownloadInstructions, m.item(0))});
        s.send(peer(Role::SoftwareRepository, ctx), make_message("D9.1", {Term::text(di.downloads[0].url)}));
    } else if (m.step == "D9.2" && m.from(Role::SoftwareRepository)) {
        ctx.scratch["encased"] = m.item(0);
        s.send(peer(Role::ConsumerLocalStorage, ctx), make_message("D9.3", {m.item(0)}));
    } else if (m.step == "D9.4" && m.from(Role::ConsumerLocalStorage)) {
        const Term& encased = scratch(ctx, "encased");
        verify_signed(encased, cert_key(ctx.get(K::VcmCert), "VCM", s), s.crypto);
        ctx.materials[K::SoftwareEncased] = encased;
        s.emit(SP::DownloadSoftwareFiles, 6, {s.ref(K::SoftwareEncased, encased)});
    } else {
        unexpected("CDA: " + m.step);
    }
}

void csa(EntityState& self, RoundContext& ctx, const Msg& m, Services& s) {
    CsaVault& vault = self.vaults[ctx.round];
    const PrivateKey& vehicle_sk = own_key(self);
    if (m.step == "D5" && m.from(Role::CDA)) {
        PublicKey pda_pk = cert_key(m.item(1), "PDA", s);
        cert_key(m.item(2), "VCM", s);
        vault.associate("dkm", m.item(0), pda_pk, vehicle_sk, policy::kDecryptDownloadInstructions, s.crypto);
        ctx.materials[K::Dkm] = m.item(0);
        ctx.materials[K::PdaCert] = m.item(1);
        ctx.materials[K::VcmCert] = m.item(2);
        s.emit(SP::DownloadSoftwareFiles, 1, {s.ref(K::Dkm, m.item(0))});
        s.send(peer(Role::CDA, ctx), make_message("D6.4", {success_flag("DKM")}));
    } else if (m.step == "D7" && m.from(Role::CDA)) {
        const Term& ct = verify_signed(m.item(0), cert_key(ctx.get(K::PdaCert), "PDA", s), s.crypto);
        Term di = Term::decode(vault.use("dkm", policy::kDecryptDownloadInstructions, ct, s.crypto));
        s.emit(SP::DownloadSoftwareFiles, 2, {s.ref(K::DownloadInstructions, di)});
        s.send(peer(Role::CDA, ctx), make_message("D8.3", {di}));
    } else if (m.step == "D11.6" && m.from(Role::CIA)) {
        PublicKey pia_pk = cert_key(m.item(1), "PIA", s);
        vault.associate("ikm", m.item(0), pia_pk, vehicle_sk, policy::kDecryptInstallationInstructions, s.crypto);
        ctx.materials[K::Ikm] = m.item(0);
        ctx.materials[K::PiaCert] = m.item(1);
        s.emit(SP::DecryptInstallationInstructions, 2, {s.ref(K::Ikm, m.item(0))});
        s.send(peer(Role::CIA, ctx), make_message("D12.5", {success_flag("IKM")}));
    } else if (m.step == "D13.1" && m.from(Role::CIA)) {
        const Term& ct = verify_signed(m.item(0), cert_key(ctx.get(K::PiaCert), "PIA", s), s.crypto);
        Term ii = Term::decode(vault.use("ikm", policy::kDecryptInstallationInstructions, ct, s.crypto));
        s.emit(SP::DecryptInstallationInstructions, 3, {s.ref(K::InstallationInstructions, ii)});
        s.send(peer(Role::CIA, ctx), make_message("D14.3", {ii}));
    } else if (m.step == "D15.4" && m.from(Role::CIA)) {
        PublicKey psa_pk = cert_key(m.item(1), "PSA", s);
        vault.associate_mkm(m.item(0), psa_pk, vehicle_sk, s.crypto);
        ctx.materials[K::Mkm] = m.item(0);
        ctx.materials[K::MkmSecurityAccessKey] = vault.peek("mkm_sa")->to_term();
        ctx.materials[K::MkmSoftwareKey] = vault.peek("mkm_sw")->to_term();
        s.emit(SP::SetupInstallationEnvironment, 2, {s.ref(K::Mkm, m.item(0))});
        s.send(peer(Role::CIA, ctx), make_message("D16.4", {success_flag("MKM")}));
    } else if (m.step == "D17.4" && m.from(Role::CIA)) {
        const Term& challenge = m.item(0);
        if (!challenge.is_atom(AtomKind::Nonce)) invalid("challenge is not a nonce");
        SymKey sa = SymKey::from_term(
            Term::decode(vault.use("mkm_sa", policy::kUnwrapSecurityAccess, m.item(1), s.crypto)));
        Term response = Term::atom(AtomKind::Digest, s.crypto.challenge_response(challenge.bytes(), sa));
        s.register_material(K::ChallengeResponse, response);
        s.emit(SP::StreamUpdateToEcu, 3,
               {s.ref(K::EcuChallenge, challenge), s.ref(K::ChallengeResponse, response)});
        s.send(peer(Role::CIA, ctx), make_message("D17.7", {response}));
    } else if (m.step == "D17.12" && m.from(Role::CIA)) {
        SymKey sw_key = SymKey::from_term(
            Term::decode(vault.use("mkm_sw", policy::kUnwrapSoftwareKey, m.item(1), s.crypto)));
        Term signed_sw = open_encased_signed(m.item(0), sw_key, cert_key(ctx.get(K::VcmCert), "VCM", s),
                                             s.directory.key("Supplier", s.crypto), s.crypto);
        s.emit(SP::StreamUpdateToEcu, 8,
               {s.ref(K::Software, signed_sw.payload()), s.ref(K::SkaSoftwareEntry, m.item(1))});
        s.send(peer(Role::CIA, ctx), make_message("D17.16", {signed_sw}));
    } else {
        unexpected("CSA: " + m.step);
    }
}

void cia_try_stream(RoundContext& ctx, Services& s) {
    if (ctx.find_scratch("unlocked") && ctx.find_scratch("software") && !ctx.find_scratch("streamed")) {
        ctx.scratch["streamed"] = Term::number(1);
        s.send(peer(Role::ECU, ctx), make_message("D17.17", {*ctx.find_scratch("software")}));
    }
}

void cia(EntityState&, RoundContext& ctx, const Msg& m, Services& s) {
    if (m.step == "D10" && m.from(Role::CDA)) {
        ctx.materials[K::EncInstallationInstructions] = m.item(0);
        ctx.materials[K::Ikm] = m.item(1);
        ctx.materials[K::PiaCert] = m.item(2);
        s.emit(SP::DecryptInstallationInstructions, 1, {s.ref(K::EncInstallationInstructions, m.item(0))});
        s.send(peer(Role::CSA, ctx), make_message("D11.6", {m.item(1), m.item(2)}));
    } else if (m.step == "D12.5" && m.from(Role::CSA)) {
        s.send(peer(Role::CSA, ctx), make_message("D13.1", {ctx.get(K::EncInstallationInstructions)}));
    } else if (m.step == "D14.3" && m.from(Role::CSA)) {
        if (!InstallationInstructions::from_term(m.item(0)).complete()) invalid("installation instructions incomplete");
        ctx.materials[K::InstallationInstructions] = m.item(0);
        s.emit(SP::DecryptInstallationInstructions, 4, {s.ref(K::InstallationInstructions, m.item(0))});
    } else if (m.step == "D16.4" && m.from(Role::CSA)) {
        s.emit(SP::SetupInstallationEnvironment, 3, {s.ref(K::Mkm, ctx.get(K::Mkm))});
    } else if (m.step == "D17.3" && m.from(Role::ECU)) {
        const Term& challenge = m.item(0);
        if (!challenge.is_atom(AtomKind::Nonce)) unexpected("ECU challenge is not a nonce");
        if (ctx.find_scratch("challenge")) unexpected("challenge already answered");
        ctx.scratch["challenge"] = challenge;
        const Term& entry = ctx.get(K::SkaSecurityAccessEntry);
        s.emit(SP::StreamUpdateToEcu, 2,
               {s.ref(K::EcuChallenge, challenge), s.ref(K::SkaSecurityAccessEntry, entry)});
        s.send(peer(Role::CSA, ctx), make_message("D17.4", {challenge, entry}));
    } else if (m.step == "D17.7" && m.from(Role::CSA)) {
        s.send(peer(Role::ECU, ctx), make_message("D17.8", {m.item(0)}));
    } else if (m.step == "D17.9" && m.from(Role::ECU)) {
        const Term& st = m.item(0);
        if (!st.is_record(Tag::EcuStatus) || st.children().size() != 1) unexpected("malformed ECU status");
        if (st.child(0).as_text() != "unlocked") invalid("ECU denied security access");
        ctx.scratch["unlocked"] = Term::number(1);
        cia_try_stream(ctx, s);
    } else if (m.step == "D17.11" && m.from(Role::ConsumerLocalStorage)) {
        const Term& encased = m.item(0);
        const Term& entry = ctx.get(K::SkaSoftwareEntry);
        s.emit(SP::StreamUpdateToEcu, 6, {s.ref(K::SoftwareEncased, encased)});
        s.emit(SP::StreamUpdateToEcu, 7, {s.ref(K::SoftwareEncased, encased), s.ref(K::SkaSoftwareEntry, entry)});
        s.send(peer(Role::CSA, ctx), make_message("D17.12", {encased, entry}));
    } else if (m.step == "D17.16" && m.from(Role::CSA)) {
        ctx.scratch["software"] = m.item(0);
        cia_try_stream(ctx, s);
    } else if (m.step == "D17.21" && m.from(Role::ECU)) {
        const Term& st = m.item(0);
        if (!st.is_record(Tag::InstallStatus) || st.children().size() != 2) unexpected("malformed install status");
        if (st.child(0).as_text() != "installed") invalid("ECU rejected the software: " + st.child(1).as_text());
        ctx.scratch["installed"] = st;
    } else {
        unexpected("CIA: " + m.step);
    }
}

void ecu(EntityState& self, RoundContext& ctx, const Msg& m, Services& s) {
    EcuState& e = self.ecu;
    if (m.step == "D17.1" && m.from(Role::CIA)) {
        Term challenge = Term::atom(AtomKind::Nonce, ecu_challenge(e, s.rng));
        s.register_material(K::EcuChallenge, challenge);
        ctx.scratch["challenge"] = challenge;
        s.emit(SP::StreamUpdateToEcu, 1, {s.ref(K::EcuChallenge, challenge)});
        s.send(peer(Role::CIA, ctx), make_message("D17.3", {challenge}));
    } else if (m.step == "D17.8" && m.from(Role::CIA)) {
        const Term* resp = m.t.children().size() > 1 ? &m.t.child(1) : nullptr;
        UnlockResult r = resp && resp->is_atom(AtomKind::Digest) ? ecu_verify_response(e, resp->bytes(), s.crypto)
                                                                   : (e.pending_challenge.reset(), UnlockResult::Rejected);
        if (r == UnlockResult::Unlocked) {
            Term used = Term::atom(AtomKind::Nonce, *e.unlocked_by);
            ctx.scratch["unlocked_by"] = used;
            s.emit(SP::StreamUpdateToEcu, 4, {s.ref(K::EcuChallenge, used), s.ref(K::ChallengeResponse, *resp)});
            s.status("ECU Unlocked");
            s.send(peer(Role::CIA, ctx), make_message("D17.9", {Term::record(Tag::EcuStatus, {Term::text("unlocked")})}));
        } else {
            s.status("ECU Rejected(BadResponse)");
            s.send(peer(Role::CIA, ctx), make_message("D17.9", {Term::record(Tag::EcuStatus, {Term::text("denied")})}));
        }
    } else if (m.step == "D17.17" && m.from(Role::CIA)) {
        std::optional<Term> used;
        if (e.unlocked_by) used = Term::atom(AtomKind::Nonce, *e.unlocked_by);
        Term sw = m.t.children().size() > 1 ? m.t.child(1) : Term::data({});
        InstallResult r = ecu_install(e, sw, s.directory.key("Supplier", s.crypto), s.crypto);
        if (r.installed) {
            s.emit(SP::StreamUpdateToEcu, 9, {s.ref(K::Software, sw.payload()), s.ref(K::EcuChallenge, *used)});
            s.status("ECU Installed(" + std::to_string(r.version) + ")");
            s.send(peer(Role::CIA, ctx), make_message("D17.21", {Term::record(Tag::InstallStatus,
                                                                              {Term::text("installed"),
                                                                               Term::text(std::to_string(r.version))})}));
        } else {
            s.status("ECU Rejected(" + r.reason + ")");
            s.send(peer(Role::CIA, ctx),
                   make_message("D17.21",
                                {Term::record(Tag::InstallStatus, {Term::text("rejected"), Term::text(r.reason)})}));
        }
    } else {
        unexpected("ECU: " + m.step);
    }
}

}  // namespace

// ================================================================ initiation tasks

void initiate(EntityState& self, RoundContext& ctx, SubProblem sp, Services& s) {
    const auto& dir = s.directory;
    const Role role = self.id.role;
    auto wrong = [&]() { fail(ErrorCode::ConfigError, self.id.name() + " does not initiate that sub-problem"); };
    switch (sp) {
        case SP::SecureSoftwareFiles:
            if (role == Role::Supplier) {
                auto it = self.store.find("release");
                if (it == self.store.end()) fail(ErrorCode::ConfigError, "supplier has no release staged");
                Software sw = Software::from_term(it->second);
                s.register_material(K::Software, it->second);
                s.send(peer(Role::ProducerLocalStorage, ctx),
                       make_message("P1.2", {sign_software(sw, own_key(self), s.crypto)}));
            } else if (role == Role::VCM) {
                s.send(peer(Role::ProducerLocalStorage, ctx), make_message("P2.1", {request_flag("Software")}));
            } else {
                wrong();
            }
            return;
        case SP::UploadSoftwareFiles:
            if (role != Role::VCM) wrong();
            s.send(peer(Role::SoftwareRepository, ctx), make_message("P5.1", {ctx.get(K::SoftwareEncased)}));
            return;
        case SP::OrderInitiation:
            if (role == Role::CDA) {
                Vso v{ctx.round.to_term(), vin_of(ctx), s.release.onboard};
                Term vso = sign_local(v.to_term(), self, s.crypto);
                s.register_material(K::Vso, vso);
                ctx.materials[K::Vso] = vso;
                s.emit(SP::OrderInitiation, 1, {s.ref(K::Vso, vso)});
                s.send(peer(Role::OrderCloudService, ctx), make_message("E1.3", {vso}));
            } else if (role == Role::OrderAgent) {
                s.send(peer(Role::OrderCloudService, ctx), make_message("E2.1", {request_flag("VSO")}));
            } else {
                wrong();
            }
            return;
        case SP::CreateSoftwareList:
            if (role != Role::VCM) wrong();
            ctx.get(K::Vso);
            s.send(peer(Role::VinDatabase, ctx), make_message("E3.2", {Term::text(vin_of(ctx))}));
            return;
        case SP::CreateDownloadInstructions:
        case SP::CreateInstallationInstructions: {
            const bool pda = sp == SP::CreateDownloadInstructions;
            if (role != (pda ? Role::PDA : Role::PIA)) wrong();
            const Term& list_t = ctx.get(K::SoftwareList);
            SoftwareList list =
                SoftwareList::from_term(verify_signed(list_t, cert_key(ctx.get(K::VcmCert), "VCM", s), s.crypto));
            s.emit(sp, 1, {s.ref(K::SoftwareList, list_t)});
            if (pda) {
                Term di = build_download_instructions(list).to_term();
                s.register_material(K::DownloadInstructions, di);
                ctx.materials[K::DownloadInstructions] = di;
                s.emit(sp, 2, {s.ref(K::DownloadInstructions, di)});
                s.send(peer(Role::PSA, ctx), make_message("E4.3", {request_flag("DKM_Key")}));
            } else {
                Term base = InstallationInstructions{list_t, std::nullopt, std::nullopt, std::nullopt}.to_term();
                s.register_material(K::InstallationInstructions, base);
                ctx.scratch["base"] = base;
                s.emit(sp, 2, {s.ref(K::InstallationInstructions, base)});
                s.send(peer(Role::PSA, ctx), make_message("E7.1", {request_flag("MKM"), request_flag("SKA")}));
            }
            return;
        }
        case SP::GenerateInstallationMaterials: {
            if (role != Role::PSA) wrong();
            const Term& list_t = ctx.get(K::SoftwareList);
            verify_signed(list_t, cert_key(ctx.get(K::VcmCert), "VCM", s), s.crypto);
            s.emit(sp, 1, {s.ref(K::SoftwareList, list_t)});
            s.send(peer(Role::CMS, ctx), make_message("E6.2", {list_t}));
            return;
        }
        case SP::PackageTheInstructions:
            if (role != Role::VCM) wrong();
            s.send(peer(Role::PDA, ctx), make_message("E8.1", {request_flag("DownloadInstructions"),
                                                               request_flag("DKM"), request_flag("PDA_Cert")}));
            s.send(peer(Role::PIA, ctx), make_message("E8.1", {request_flag("InstallationInstructions"),
                                                               request_flag("IKM"), request_flag("PIA_Cert")}));
            return;
        case SP::NotifyOrderReady:
            if (role == Role::VCM) {
                const Term& url = ctx.get(K::VuupUrl);
                s.emit(sp, 1, {s.ref(K::VuupUrl, url)});
                s.send(peer(Role::OrderAgent, ctx), make_message("E9", {sign_local(url, self, s.crypto)}));
            } else if (role == Role::CDA) {
                s.emit(sp, 3, {s.ref(K::Vso, ctx.get(K::Vso))});
                s.send(peer(Role::OrderCloudService, ctx), make_message("E11.1", {request_flag("VUUP_URL")}));
            } else {
                wrong();
            }
            return;
        case SP::DownloadVuup: {
            if (role != Role::CDA) wrong();
            const Term& url = verify_signed(ctx.get(K::VuupUrl), cert_key(ctx.get(K::VcmCert), "VCM", s), s.crypto);
            s.emit(sp, 2, {s.ref(K::VuupUrl, url)});
            s.send(peer(Role::VehicleCloudService, ctx), make_message("D2.1", {url}));
            return;
        }
        case SP::DownloadSoftwareFiles:
            if (role != Role::CDA) wrong();
            s.send(peer(Role::CSA, ctx),
                   make_message("D5", {ctx.get(K::Dkm), ctx.get(K::PdaCert), ctx.get(K::VcmCert)}));
            return;
        case SP::DecryptInstallationInstructions:
            if (role != Role::CDA) wrong();
            s.send(peer(Role::CIA, ctx), make_message("D10", {ctx.get(K::EncInstallationInstructions),
                                                              ctx.get(K::Ikm), ctx.get(K::PiaCert)}));
            return;
        case SP::SetupInstallationEnvironment: {
            if (role != Role::CIA) wrong();
            InstallationInstructions ii = InstallationInstructions::from_term(ctx.get(K::InstallationInstructions));
            if (!ii.complete()) invalid("installation instructions incomplete");
            PublicKey psa_pk = cert_key(ii.psa_cert->to_term(), "PSA", s);
            SecureKeyArray ska = SecureKeyArray::from_term(verify_signed(*ii.ska, psa_pk, s.crypto));
            verify_signed(*ii.mkm, psa_pk, s.crypto);
            if (ska.security_access_entries.empty() || ska.software_entries.empty()) invalid("SKA is empty");
            s.emit(sp, 1, {s.ref(K::Mkm, *ii.mkm), s.ref(K::Ska, *ii.ska)});
            ctx.materials[K::Mkm] = *ii.mkm;
            ctx.materials[K::SkaSecurityAccessEntry] = ska.security_access_entries.front().to_term();
            ctx.materials[K::SkaSoftwareEntry] = ska.software_entries.front().to_term();
            s.send(peer(Role::CSA, ctx), make_message("D15.4", {*ii.mkm, ii.psa_cert->to_term()}));
            return;
        }
        case SP::StreamUpdateToEcu:
            if (role != Role::CIA) wrong();
            s.send(peer(Role::ECU, ctx), make_message("D17.1", {request_flag("SecurityAccess")}));
            s.send(peer(Role::ConsumerLocalStorage, ctx), make_message("D17.10", {request_flag("Software")}));
            return;
    }
    (void)dir;
}

void handle(EntityState& self, RoundContext& ctx, const Envelope& env, const Term& message, Services& s) {
    if (!message.is_record(Tag::Message) || message.children().empty() || !message.child(0).is_atom(AtomKind::Text))
        unexpected("not a protocol message");
    Msg m{message.child(0).as_text(), message, env};
    switch (self.id.role) {
        case Role::Supplier: return supplier(self, ctx, m, s);
        case Role::ProducerLocalStorage: return pls(self, ctx, m, s);
        case Role::VCM: return vcm(self, ctx, m, s);
        case Role::PSS: return pss(self, ctx, m, s);
        case Role::CMS: return cms(self, ctx, m, s);
        case Role::PSA: return psa(self, ctx, m, s);
        case Role::PDA: return agent(kPda, self, ctx, m, s);
        case Role::PIA: return agent(kPia, self, ctx, m, s);
        case Role::VinDatabase: return vin_db(self, ctx, m, s);
        case Role::SoftwareRepository: return repository(self, ctx, m, s);
        case Role::OrderCloudService: return ocs(self, ctx, m, s);
        case Role::OrderAgent: return order_agent(self, ctx, m, s);
        case Role::VehicleCloudService: return vcs(self, ctx, m, s);
        case Role::ConsumerLocalStorage: return cls(self, ctx, m, s);
        case Role::CDA: return cda(self, ctx, m, s);
        case Role::CSA: return csa(self, ctx, m, s);
        case Role::CIA: return cia(self, ctx, m, s);
        case Role::ECU: return ecu(self, ctx, m, s);
        case Role::Database: unexpected("the database takes no part in the modeled sub-problems");
    }
}

}  // namespace unisuf
