#include "unisuf/subproblems.hpp"

#include <algorithm>
#include <set>

#include "unisuf/error.hpp"

namespace unisuf {

using K = MaterialKind;
using R = Role;

std::string_view stage_name(Stage s) {
    switch (s) {
        case Stage::Preparation: return "preparation";
        case Stage::Encapsulation: return "encapsulation";
        case Stage::Decapsulation: return "decapsulation";
    }
    return "?";
}

namespace {

std::vector<std::pair<int, int>> chain(int n) {
    std::vector<std::pair<int, int>> out;
    for (int i = 1; i < n; ++i) out.emplace_back(i, i + 1);
    return out;
}

SecretRef kinds(std::string name, std::vector<K> ks) { return SecretRef{std::move(name), std::move(ks), {}}; }
SecretRef key_of(std::string holder) { return SecretRef{holder + "_PrivateKey", {}, holder}; }
SecretRef mkm_keys() { return kinds("MKM_Key", {K::MkmSecurityAccessKey, K::MkmSoftwareKey}); }
SecretRef ska_keys() { return kinds("SKA_Key", {K::SecurityAccessKey, K::SoftwareKey}); }

std::vector<SubProblemSpec> build() {
    std::vector<SubProblemSpec> v;

    v.push_back({SubProblem::SecureSoftwareFiles, "secure_software_files", Stage::Preparation,
                 {{1, R::ProducerLocalStorage, {K::Software}, "PLS stores supplier-signed software"},
                  {2, R::PSA, {K::SoftwareKey}, "PSA generates the software key"},
                  {3, R::VCM, {K::SoftwareHash}, "VCM encrypts the software and hashes the ciphertext"},
                  {4, R::PSS, {K::SignedSoftwareHash}, "PSS signs the hash on behalf of VCM"},
                  {5, R::VCM, {K::SoftwareEncased}, "VCM assembles the encased software"}},
                 chain(5),
                 {kinds("Software", {K::Software}), kinds("Software_Key", {K::SoftwareKey}), key_of("Supplier"),
                  key_of("VCM")},
                 {},
                 {{R::Supplier}, {R::VCM}}});

    v.push_back({SubProblem::UploadSoftwareFiles, "upload_software_files", Stage::Preparation,
                 {{1, R::SoftwareRepository, {K::SoftwareEncased}, "repository stores encased software"},
                  {2, R::VinDatabase, {K::SoftwareUrl}, "VIN database records the software URL"},
                  {3, R::CMS, {K::SoftwareKey}, "CMS stores the software key"},
                  {4, R::VCM, {K::SoftwareKey}, "VCM receives the storage confirmation"}},
                 chain(4),
                 {kinds("Software", {K::Software}), kinds("Software_Key", {K::SoftwareKey}), key_of("Supplier"),
                  key_of("VCM")},
                 {{R::VCM, {K::SoftwareEncased, K::SoftwareKey}}},
                 {{R::VCM}}});

    v.push_back({SubProblem::OrderInitiation, "order_initiation", Stage::Encapsulation,
                 {{1, R::CDA, {K::Vso}, "CDA signs and sends the vehicle order"},
                  {2, R::OrderCloudService, {K::Vso}, "OCS queues the order"},
                  {3, R::OrderAgent, {K::Vso}, "OA pulls and verifies the order"},
                  {4, R::OrderAgent, {K::Vso}, "OA initiates VCM with the order"},
                  {5, R::VCM, {K::Vso}, "VCM accepts the order"}},
                 chain(5),
                 {key_of("CDA")},
                 {},
                 {{R::CDA}, {R::OrderAgent}}});

    v.push_back({SubProblem::CreateSoftwareList, "create_software_list", Stage::Encapsulation,
                 {{1, R::VCM, {K::VinData, K::SoftwareVersions, K::Vso}, "VCM obtains VIN data and versions"},
                  {2, R::VCM, {K::SoftwareList}, "VCM creates the signed software list"},
                  {3, R::VCM, {K::SoftwareList}, "VCM sends the list to PDA"},
                  {4, R::VCM, {K::SoftwareList}, "VCM sends the list to PIA"},
                  {5, R::VCM, {K::SoftwareList}, "VCM sends the list to PSA"},
                  {6, R::VCM, {K::SoftwareList}, "VCM has every list acknowledged"}},
                 {{1, 2}, {2, 3}, {2, 4}, {2, 5}, {3, 6}, {4, 6}, {5, 6}},
                 {key_of("CDA"), key_of("VCM")},
                 {{R::VCM, {K::Vso}}},
                 {{R::VCM}}});

    v.push_back({SubProblem::CreateDownloadInstructions, "create_download_instructions", Stage::Encapsulation,
                 {{1, R::PDA, {K::SoftwareList}, "PDA validates the software list"},
                  {2, R::PDA, {K::DownloadInstructions}, "PDA creates download instructions"},
                  {3, R::PSA, {K::DkmKey}, "PSA generates the DKM key"},
                  {4, R::PSA, {K::DkmKey}, "PSA sends the DKM key"},
                  {5, R::CMS, {K::VehicleCert}, "CMS provides the vehicle certificate"},
                  {6, R::PDA, {K::Dkm}, "PDA encrypts the instructions and builds the DKM"},
                  {7, R::PSS, {K::EncDownloadInstructions}, "PSS signs the encrypted instructions"},
                  {8, R::PSS, {K::EncDownloadInstructions}, "PSS returns the signature"},
                  {9, R::PSS, {K::Dkm}, "PSS signs the DKM"},
                  {10, R::PSS, {K::Dkm}, "PSS returns the DKM signature"}},
                 chain(10),
                 {kinds("SoftwareList", {K::SoftwareList}), kinds("Download_Instructions", {K::DownloadInstructions}),
                  kinds("DKM_Key", {K::DkmKey}), key_of("Root"), key_of("PDA"), key_of("VCM")},
                 {{R::PDA, {K::SoftwareList, K::VcmCert}}},
                 {{R::PDA}}});

    v.push_back({SubProblem::GenerateInstallationMaterials, "generate_installation_materials", Stage::Encapsulation,
                 {{1, R::PSA, {K::SoftwareList}, "PSA validates the software list"},
                  {2, R::CMS,
                   {K::SoftwareList, K::VehicleCert, K::SoftwareKey, K::SecurityAccessKey},
                   "CMS returns the vehicle certificate and SKA keys"},
                  {3, R::PSA, {K::MkmSecurityAccessKey, K::MkmSoftwareKey}, "PSA generates MKM master keys"},
                  {4, R::PSA, {K::Mkm}, "PSA builds the MKM"},
                  {5, R::PSA, {K::Ska}, "PSA builds the SKA"},
                  {6, R::PSS, {K::Ska}, "PSS signs the SKA"},
                  {7, R::PSS, {K::Ska}, "PSS returns the SKA signature"},
                  {8, R::PSS, {K::Mkm}, "PSS signs the MKM"},
                  {9, R::PSS, {K::Mkm}, "PSS returns the MKM signature"}},
                 chain(9),
                 {kinds("SoftwareList", {K::SoftwareList}), mkm_keys(), ska_keys(), key_of("Root"), key_of("PSA"),
                  key_of("VCM")},
                 {{R::PSA, {K::SoftwareList, K::VcmCert}}, {R::CMS, {K::VehicleCert}}},
                 {{R::PSA}}});

    v.push_back({SubProblem::CreateInstallationInstructions, "create_installation_instructions", Stage::Encapsulation,
                 {{1, R::PIA, {K::SoftwareList}, "PIA validates the software list"},
                  {2, R::PIA, {K::InstallationInstructions}, "PIA creates installation instructions"},
                  {3, R::PSA, {K::Mkm, K::Ska}, "PSA provides signed MKM and SKA"},
                  {4, R::PSA, {K::IkmKey}, "PSA generates the IKM key"},
                  {5, R::PSA, {K::IkmKey}, "PSA sends the IKM key"},
                  {6, R::CMS, {K::VehicleCert}, "CMS provides the vehicle certificate"},
                  {7, R::PIA, {K::Ikm}, "PIA encrypts the instructions and builds the IKM"},
                  {8, R::PSS, {K::EncInstallationInstructions}, "PSS signs the encrypted instructions"},
                  {9, R::PSS, {K::EncInstallationInstructions}, "PSS returns the signature"},
                  {10, R::PSS, {K::Ikm}, "PSS signs the IKM"},
                  {11, R::PSS, {K::Ikm}, "PSS returns the IKM signature"}},
                 chain(11),
                 {kinds("SoftwareList", {K::SoftwareList}),
                  kinds("Installation_Instructions", {K::InstallationInstructions}), kinds("IKM_Key", {K::IkmKey}),
                  key_of("Root"), key_of("PIA"), key_of("VCM")},
                 {{R::PIA, {K::SoftwareList, K::VcmCert}}, {R::PSA, {K::Ska, K::Mkm}}, {R::CMS, {K::VehicleCert}}},
                 {{R::PIA}}});

    v.push_back({SubProblem::PackageTheInstructions, "package_the_instructions", Stage::Encapsulation,
                 {{1, R::VCM, {K::EncDownloadInstructions, K::Dkm}, "VCM receives the download parts"},
                  {2, R::VCM, {K::EncInstallationInstructions, K::Ikm}, "VCM receives the installation parts"},
                  {3, R::VCM, {K::PdaCert, K::PiaCert}, "VCM validates parts against CMS certificates"},
                  {4, R::VCM, {K::VuupContent}, "VCM assembles the VUUP content"},
                  {5, R::PSS, {K::VuupContent}, "PSS signs the VUUP content"},
                  {6, R::VCM, {K::Vuup}, "VCM uploads the VUUP"},
                  {7, R::VCM, {K::Vuup, K::VuupUrl}, "VCM receives the VUUP URL"}},
                 {{1, 3}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {6, 7}},
                 {key_of("Vehicle"), key_of("Root"), key_of("PDA"), key_of("PIA"), key_of("PSA"), key_of("VCM"),
                  kinds("DKM_Key", {K::DkmKey}), kinds("IKM_Key", {K::IkmKey})},
                 {{R::PDA, {K::EncDownloadInstructions, K::Dkm}}, {R::PIA, {K::EncInstallationInstructions, K::Ikm}}},
                 {{R::VCM}}});

    v.push_back({SubProblem::NotifyOrderReady, "notify_order_ready", Stage::Encapsulation,
                 {{1, R::VCM, {K::VuupUrl}, "VCM signs and sends the VUUP URL"},
                  {2, R::OrderAgent, {K::VuupUrl}, "OA forwards the notification"},
                  {3, R::CDA, {K::Vso}, "CDA polls the order status"},
                  {4, R::OrderCloudService, {K::VuupUrl, K::VcmCert}, "OCS answers with the signed URL"}},
                 chain(4),
                 {key_of("VCM")},
                 {{R::VCM, {K::VuupUrl}}},
                 {{R::VCM}, {R::CDA}}});

    v.push_back({SubProblem::DownloadVuup, "download_vuup", Stage::Decapsulation,
                 {{1, R::OrderCloudService, {K::VuupUrl, K::VcmCert}, "OCS delivers the signed URL"},
                  {2, R::CDA, {K::VuupUrl}, "CDA validates the URL and requests the VUUP"},
                  {3, R::VehicleCloudService, {K::Vuup}, "VCS serves the VUUP"},
                  {4, R::ConsumerLocalStorage, {K::Vuup}, "CLS stores the VUUP"},
                  {5, R::CDA,
                   {K::EncDownloadInstructions, K::Dkm, K::EncInstallationInstructions, K::Ikm},
                   "CDA validates every VUUP part"}},
                 chain(5),
                 {kinds("VUUP_URL", {K::VuupUrl}), kinds("Download_Instructions", {K::DownloadInstructions}),
                  kinds("Installation_Instructions", {K::InstallationInstructions}), kinds("DKM_Key", {K::DkmKey}),
                  kinds("IKM_Key", {K::IkmKey}), mkm_keys(), ska_keys(), key_of("VCM"), key_of("Vehicle"),
                  key_of("PDA"), key_of("PIA"), key_of("PSA"), key_of("Root")},
                 {{R::OrderCloudService, {K::VuupUrl}},
                  {R::VehicleCloudService, {K::Vuup}},
                  {R::CDA, {K::VuupUrl, K::VcmCert}}},
                 {{R::CDA}}});

    v.push_back({SubProblem::DownloadSoftwareFiles, "download_software_files", Stage::Decapsulation,
                 {{1, R::CSA, {K::Dkm}, "CSA associates the DKM key"},
                  {2, R::CSA, {K::DownloadInstructions}, "CSA decrypts the download instructions"},
                  {3, R::CDA, {K::DownloadInstructions}, "CDA reads the download instructions"},
                  {4, R::SoftwareRepository, {K::SoftwareEncased}, "repository serves encased software"},
                  {5, R::ConsumerLocalStorage, {K::SoftwareEncased}, "CLS stores encased software"},
                  {6, R::CDA, {K::SoftwareEncased}, "CDA validates the encased software"}},
                 chain(6),
                 {kinds("Software", {K::Software}), kinds("Download_Instructions", {K::DownloadInstructions}),
                  kinds("DKM_Key", {K::DkmKey}), kinds("SKA_Software_Key", {K::SoftwareKey}), key_of("VCM"),
                  key_of("Vehicle"), key_of("PDA"), key_of("Supplier"), key_of("Root")},
                 {{R::CDA, {K::Dkm, K::PdaCert, K::VcmCert, K::EncDownloadInstructions}}},
                 {{R::CDA}}});

    v.push_back({SubProblem::DecryptInstallationInstructions, "decrypt_installation_instructions",
                 Stage::Decapsulation,
                 {{1, R::CIA, {K::EncInstallationInstructions}, "CIA enters offline mode"},
                  {2, R::CSA, {K::Ikm}, "CSA associates the IKM key"},
                  {3, R::CSA, {K::InstallationInstructions}, "CSA decrypts the installation instructions"},
                  {4, R::CIA, {K::InstallationInstructions}, "CIA holds the installation instructions"}},
                 chain(4),
                 {kinds("Installation_Instructions", {K::InstallationInstructions}), kinds("IKM_Key", {K::IkmKey}),
                  mkm_keys(), ska_keys(), key_of("PIA"), key_of("PSA"), key_of("Root")},
                 {{R::CDA, {K::PiaCert, K::Ikm, K::EncInstallationInstructions}}},
                 {{R::CDA}}});

    v.push_back({SubProblem::SetupInstallationEnvironment, "setup_installation_environment", Stage::Decapsulation,
                 {{1, R::CIA, {K::Mkm, K::Ska}, "CIA validates MKM and SKA"},
                  {2, R::CSA, {K::Mkm}, "CSA associates the MKM keys"},
                  {3, R::CIA, {K::Mkm}, "CIA receives the MKM confirmation"}},
                 chain(3),
                 {kinds("Installation_Instructions", {K::InstallationInstructions}), mkm_keys(), ska_keys(),
                  key_of("PSA"), key_of("Root")},
                 {{R::CIA, {K::InstallationInstructions}}},
                 {{R::CIA}}});

    v.push_back({SubProblem::StreamUpdateToEcu, "stream_update_to_ecu", Stage::Decapsulation,
                 {{1, R::ECU, {K::EcuChallenge}, "ECU issues a challenge"},
                  {2, R::CIA, {K::EcuChallenge, K::SkaSecurityAccessEntry}, "CIA forwards challenge and SA entry"},
                  {3, R::CSA, {K::EcuChallenge, K::ChallengeResponse}, "CSA computes the response"},
                  {4, R::ECU, {K::EcuChallenge, K::ChallengeResponse}, "ECU unlocks"},
                  {5, R::ConsumerLocalStorage, {K::SoftwareEncased}, "CLS provides encased software"},
                  {6, R::CIA, {K::SoftwareEncased}, "CIA receives encased software"},
                  {7, R::CIA, {K::SoftwareEncased, K::SkaSoftwareEntry}, "CIA forwards software and key entry"},
                  {8, R::CSA, {K::Software, K::SkaSoftwareEntry}, "CSA decrypts the software"},
                  {9, R::ECU, {K::Software, K::EcuChallenge}, "ECU installs the software"}},
                 {{1, 2}, {2, 3}, {3, 4}, {4, 9}, {5, 6}, {6, 7}, {7, 8}, {8, 9}},
                 {kinds("SKA_Software_Key", {K::SoftwareKey}),
                  kinds("SKA_SecurityAccess_Key", {K::SecurityAccessKey}),
                  kinds("MKM_Software_Key", {K::MkmSoftwareKey}),
                  kinds("MKM_SecurityAccess_Key", {K::MkmSecurityAccessKey}), key_of("Vehicle"), key_of("Supplier"),
                  key_of("VCM"), key_of("Root")},
                 {{R::ConsumerLocalStorage, {K::SoftwareEncased}},
                  {R::CSA, {K::MkmSecurityAccessKey, K::MkmSoftwareKey, K::VcmCert}},
                  {R::CIA, {K::SkaSecurityAccessEntry, K::SkaSoftwareEntry, K::Mkm}}},
                 {{R::CIA}}});
    return v;
}

}  // namespace

std::string SubProblemSpec::label(int index) const {
    return std::string(name) + ".l" + std::to_string(index);
}

std::string SubProblemSpec::abort_label() const { return std::string(name) + ".abort"; }

const LabelSpec& SubProblemSpec::label_spec(int index) const {
    if (index < 1 || index > label_count())
        fail(ErrorCode::ConfigError, std::string(name) + " has no label " + std::to_string(index));
    return labels[static_cast<std::size_t>(index - 1)];
}

std::vector<std::pair<MaterialKind, std::string_view>> SubProblemSpec::materials() const {
    std::set<MaterialKind> seen;
    for (const auto& l : labels) seen.insert(l.materials.begin(), l.materials.end());
    std::vector<std::pair<MaterialKind, std::string_view>> out;
    for (auto k : seen) out.emplace_back(k, material_origin(k));
    return out;
}

const std::vector<SubProblemSpec>& all_subproblems() {
    static const std::vector<SubProblemSpec> specs = build();
    return specs;
}

const SubProblemSpec& subproblem(SubProblem id) { return all_subproblems().at(static_cast<std::size_t>(id)); }

const SubProblemSpec* find_subproblem(std::string_view name) {
    for (const auto& s : all_subproblems())
        if (s.name == name) return &s;
    return nullptr;
}

std::optional<std::pair<const SubProblemSpec*, int>> parse_label(std::string_view label) {
    auto dot = label.rfind(".l");
    if (dot == std::string_view::npos) return std::nullopt;
    const auto* spec = find_subproblem(label.substr(0, dot));
    if (!spec) return std::nullopt;
    auto digits = label.substr(dot + 2);
    if (digits.empty() || digits.size() > 3 ||
        !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }))
        return std::nullopt;
    int n = std::stoi(std::string(digits));
    if (n < 1 || n > spec->label_count()) return std::nullopt;
    return std::make_pair(spec, n);
}

std::string_view material_origin(MaterialKind k) {
    switch (k) {
        case K::Software: return "Supplier";
        case K::SoftwareKey:
        case K::DkmKey:
        case K::IkmKey:
        case K::MkmSecurityAccessKey:
        case K::MkmSoftwareKey:
        case K::SecurityAccessKey:
        case K::Mkm:
        case K::Ska:
        case K::SkaSecurityAccessEntry:
        case K::SkaSoftwareEntry: return "PSA";
        case K::SoftwareHash:
        case K::SoftwareEncased:
        case K::SoftwareList:
        case K::VuupContent:
        case K::Vuup: return "VCM";
        case K::SignedSoftwareHash: return "PSS";
        case K::SoftwareUrl: return "SR";
        case K::Vso: return "CDA";
        case K::VinData:
        case K::SoftwareVersions: return "VinDB";
        case K::DownloadInstructions:
        case K::Dkm:
        case K::EncDownloadInstructions: return "PDA";
        case K::InstallationInstructions:
        case K::Ikm:
        case K::EncInstallationInstructions: return "PIA";
        case K::VuupUrl: return "VCS";
        case K::EcuChallenge: return "ECU";
        case K::ChallengeResponse: return "CSA";
        case K::RootCert:
        case K::SupplierCert:
        case K::VcmCert:
        case K::PdaCert:
        case K::PiaCert:
        case K::PsaCert:
        case K::CdaCert:
        case K::VehicleCert: return "Root";
    }
    return "?";
}

bool round_agnostic(MaterialKind k, Stage stage) {
    if (is_certificate_kind(k) || k == K::VinData || k == K::SoftwareVersions) return true;
    // One software release serves every vehicle round that follows it.
    if (stage != Stage::Preparation)
        return k == K::Software || k == K::SoftwareKey || k == K::SoftwareEncased || k == K::SoftwareUrl ||
               k == K::SecurityAccessKey;
    return false;
}

}  // namespace unisuf
