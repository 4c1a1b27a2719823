#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "unisuf/materials.hpp"
#include "unisuf/roles.hpp"

namespace unisuf {

enum class SubProblem : std::uint8_t {
    SecureSoftwareFiles,
    UploadSoftwareFiles,
    OrderInitiation,
    CreateSoftwareList,
    CreateDownloadInstructions,
    GenerateInstallationMaterials,
    CreateInstallationInstructions,
    PackageTheInstructions,
    NotifyOrderReady,
    DownloadVuup,
    DownloadSoftwareFiles,
    DecryptInstallationInstructions,
    SetupInstallationEnvironment,
    StreamUpdateToEcu,
};

inline constexpr std::size_t kSubProblemCount = static_cast<std::size_t>(SubProblem::StreamUpdateToEcu) + 1;

enum class Stage { Preparation, Encapsulation, Decapsulation };

std::string_view stage_name(Stage s);

// A secret is either every material of the listed kinds bound to the round,
// or the private key of a named holder ("Root", "Vehicle", "VCM", ...).
struct SecretRef {
    std::string name;
    std::vector<MaterialKind> kinds;
    std::string key_holder;
};

struct LabelSpec {
    int index;
    Role emitter;
    std::vector<MaterialKind> materials;
    std::string_view description;
};

struct SubProblemSpec {
    SubProblem id;
    std::string_view name;
    Stage stage;
    std::vector<LabelSpec> labels;
    std::vector<std::pair<int, int>> order;  // (i, j) means label i precedes label j
    std::vector<SecretRef> secrets;
    std::map<Role, std::vector<MaterialKind>> starting_contexts;
    // Initiation phases. Each inner list is kicked off together; the next
    // phase starts once the network is quiet.
    std::vector<std::vector<Role>> kickoff;

    int label_count() const { return static_cast<int>(labels.size()); }
    std::string label(int index) const;
    std::string abort_label() const;
    const LabelSpec& label_spec(int index) const;
    // Material kinds handled in this sub-problem with their creators.
    std::vector<std::pair<MaterialKind, std::string_view>> materials() const;
};

const std::vector<SubProblemSpec>& all_subproblems();
const SubProblemSpec& subproblem(SubProblem id);
const SubProblemSpec* find_subproblem(std::string_view name);
// Splits "name.lN" into (spec, N); nullopt for abort/halt/unknown labels.
std::optional<std::pair<const SubProblemSpec*, int>> parse_label(std::string_view label);

// The entity that creates a material of this kind.
std::string_view material_origin(MaterialKind k);
// Materials that legitimately recur across rounds and are therefore exempt
// from the inter-round check within the given stage.
bool round_agnostic(MaterialKind k, Stage stage);

}  // namespace unisuf
