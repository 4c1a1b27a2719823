#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "unisuf/crypto.hpp"

namespace unisuf {

// Kinds of material that handling events refer to. The registry keeps one
// record per digest with one of these kinds and the entity that created it.
enum class MaterialKind : std::uint8_t {
    Software,
    SoftwareKey,
    SoftwareHash,
    SignedSoftwareHash,
    SoftwareEncased,
    SoftwareUrl,
    Vso,
    VinData,
    SoftwareVersions,
    SoftwareList,
    DownloadInstructions,
    DkmKey,
    Dkm,
    EncDownloadInstructions,
    InstallationInstructions,
    IkmKey,
    Ikm,
    EncInstallationInstructions,
    MkmSecurityAccessKey,
    MkmSoftwareKey,
    SecurityAccessKey,
    Mkm,
    Ska,
    SkaSecurityAccessEntry,
    SkaSoftwareEntry,
    VuupContent,
    Vuup,
    VuupUrl,
    EcuChallenge,
    ChallengeResponse,
    RootCert,
    SupplierCert,
    VcmCert,
    PdaCert,
    PiaCert,
    PsaCert,
    CdaCert,
    VehicleCert,
};

inline constexpr std::size_t kMaterialKindCount = static_cast<std::size_t>(MaterialKind::VehicleCert) + 1;

std::string_view material_kind_name(MaterialKind k);
std::optional<MaterialKind> parse_material_kind(std::string_view name);
bool is_certificate_kind(MaterialKind k);

struct Software {
    std::uint64_t version = 0;
    Bytes content;

    Term to_term() const;
    static Software from_term(const Term& t);
    // Plain serialization: version (8 bytes, big endian) followed by content.
    Bytes serialize() const;
    friend bool operator==(const Software&, const Software&) = default;
};

Term sign_software(const Software& sw, const PrivateKey& supplier_sk, const CryptoBackend& crypto);

// SymEnc([Software]_Supplier, key) after validating the supplier signature.
CipherText encrypt_signed_software(const Term& sw_signed, const SymKey& key, const PublicKey& supplier_pk,
                                   const CryptoBackend& crypto, Rng& rng);
Term encase_software(const Term& sw_signed, const SymKey& key, const PrivateKey& vcm_sk, const PublicKey& supplier_pk,
                     const CryptoBackend& crypto, Rng& rng);
// Peels the three layers in reverse order and returns [Software]_Supplier.
Term open_encased_signed(const Term& encased, const SymKey& key, const PublicKey& vcm_pk, const PublicKey& supplier_pk,
                         const CryptoBackend& crypto);
Software open_encased(const Term& encased, const SymKey& key, const PublicKey& vcm_pk, const PublicKey& supplier_pk,
                      const CryptoBackend& crypto);

namespace policy {
inline constexpr std::string_view kDecryptDownloadInstructions = "decrypt-download-instructions";
inline constexpr std::string_view kDecryptInstallationInstructions = "decrypt-installation-instructions";
inline constexpr std::string_view kUnwrapSecurityAccess = "unwrap-security-access";
inline constexpr std::string_view kUnwrapSoftwareKey = "unwrap-software-key";
}  // namespace policy

struct KeyManifest {
    SymKeyKind kind = SymKeyKind::Dkm;
    CipherText wrapped_key;
    std::string policy;

    Term to_term() const;
    static KeyManifest from_term(const Term& t);
    friend bool operator==(const KeyManifest&, const KeyManifest&) = default;
};

KeyManifest build_key_manifest(const SymKey& key, const PublicKey& vehicle_pk, std::string policy, SymKeyKind kind,
                               const CryptoBackend& crypto, Rng& rng);
SymKey unwrap_key_manifest(const KeyManifest& manifest, const PrivateKey& vehicle_sk, const CryptoBackend& crypto);

struct MasterKeyManifest {
    KeyManifest security_access;
    KeyManifest software;

    Term to_term() const;
    static MasterKeyManifest from_term(const Term& t);
};

struct SecureKeyArray {
    std::vector<CipherText> security_access_entries;
    std::vector<CipherText> software_entries;

    Term to_term() const;
    static SecureKeyArray from_term(const Term& t);
};

SecureKeyArray build_ska(const std::vector<SymKey>& sa_keys, const std::vector<SymKey>& sw_keys,
                         const SymKey& mkm_sa_key, const SymKey& mkm_sw_key, const CryptoBackend& crypto, Rng& rng);
SymKey open_ska_entry(const CipherText& entry, const SymKey& master, const CryptoBackend& crypto);

struct SoftwareListEntry {
    std::string software_id;
    std::uint64_t version = 0;
    std::string url;

    Term to_term() const;
    static SoftwareListEntry from_term(const Term& t);
    friend bool operator==(const SoftwareListEntry&, const SoftwareListEntry&) = default;
};

struct Vso {
    Term round;
    std::string vin;
    std::map<std::string, std::uint64_t> onboard_versions;

    Term to_term() const;
    static Vso from_term(const Term& t);
};

struct VinData {
    std::string vin;
    std::string model;

    Term to_term() const;
    static VinData from_term(const Term& t);
};

struct SoftwareVersions {
    std::vector<SoftwareListEntry> latest;

    Term to_term() const;
    static SoftwareVersions from_term(const Term& t);
};

struct SoftwareList {
    Term round;
    std::string vin;
    std::vector<SoftwareListEntry> entries;

    Term to_term() const;
    static SoftwareList from_term(const Term& t);
};

// Pairs each software id with its newest version when that is strictly
// newer than what the vehicle reports. Ids without an update are omitted.
SoftwareList build_software_list(const Vso& vso, const VinData& vin_data, const SoftwareVersions& versions);
Term build_signed_software_list(const Vso& vso, const VinData& vin_data, const SoftwareVersions& versions,
                                const PrivateKey& vcm_sk, const CryptoBackend& crypto);

struct DownloadInstructions {
    Term round;
    std::vector<SoftwareListEntry> downloads;

    Term to_term() const;
    static DownloadInstructions from_term(const Term& t);
};

DownloadInstructions build_download_instructions(const SoftwareList& list);

struct InstallationInstructions {
    Term software_list;             // [SoftwareList]_VCM
    std::optional<Term> ska;        // [SKA]_PSA
    std::optional<Term> mkm;        // [MKM]_PSA
    std::optional<Certificate> psa_cert;

    bool complete() const { return ska && mkm && psa_cert; }
    Term to_term() const;
    static InstallationInstructions from_term(const Term& t);
};

struct VuupContent {
    Certificate pda_cert;
    Certificate pia_cert;
    Term enc_download_instructions;      // [SymEnc(DI, DKM_Key)]_PDA
    Term dkm;                            // [DKM]_PDA
    Term enc_installation_instructions;  // [SymEnc(II, IKM_Key)]_PIA
    Term ikm;                            // [IKM]_PIA

    Term to_term() const;
    static VuupContent from_term(const Term& t);
};

struct VuupParts {
    std::optional<Certificate> pda_cert;
    std::optional<Certificate> pia_cert;
    std::optional<Term> enc_download_instructions;
    std::optional<Term> dkm;
    std::optional<Term> enc_installation_instructions;
    std::optional<Term> ikm;
};

struct Vuup {
    Certificate vcm_cert;
    Term content;  // [VuupContent]_VCM

    Term to_term() const;
    static Vuup from_term(const Term& t);
};

// Checks presence and the PDA/PIA signatures on each part against root
// anchored certificates, then returns the assembled content.
VuupContent validate_vuup_parts(const VuupParts& parts, const PublicKey& root_pk, const CryptoBackend& crypto);
void validate_vuup_content(const VuupContent& content, const PublicKey& root_pk, const CryptoBackend& crypto);
Vuup build_vuup(const VuupParts& parts, const PrivateKey& vcm_sk, const Certificate& vcm_cert,
                const PublicKey& root_pk, const CryptoBackend& crypto);
VuupContent validate_vuup(const Vuup& vuup, const PublicKey& root_pk, const CryptoBackend& crypto);

enum class MaterialType {
    Software,
    SignedSoftware,
    SoftwareEncased,
    KeyManifest,
    MasterKeyManifest,
    SecureKeyArray,
    DownloadInstructions,
    InstallationInstructions,
    Vuup,
    VuupContent,
    Vso,
    SoftwareList,
    Certificate,
};

using MaterialValue = std::variant<Software, KeyManifest, MasterKeyManifest, SecureKeyArray, DownloadInstructions,
                                   InstallationInstructions, Vuup, VuupContent, Vso, SoftwareList, Certificate, Term>;

Bytes canonical_encode(const MaterialValue& m);
// Signed and encased materials decode to their Term form; the rest decode to
// the typed struct. Shape errors surface as MalformedEncoding.
MaterialValue canonical_decode(ByteView bytes, MaterialType type);

}  // namespace unisuf
