#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace unisuf {

enum class Role : std::uint8_t {
    Supplier,
    ProducerLocalStorage,
    VCM,
    PSS,
    CMS,
    PSA,
    Database,
    OrderCloudService,
    OrderAgent,
    PDA,
    PIA,
    VinDatabase,
    VehicleCloudService,
    SoftwareRepository,
    ConsumerLocalStorage,
    CDA,
    CSA,
    CIA,
    ECU,
};

inline constexpr std::size_t kRoleCount = static_cast<std::size_t>(Role::ECU) + 1;

// Short names used in traces and channel ids ("PLS", "OCS", ...).
std::string_view role_name(Role r);
std::optional<Role> parse_role(std::string_view s);
// Consumer-side roles and the ECU live inside a vehicle and carry its VIN.
bool is_vehicle_role(Role r);

struct EntityId {
    Role role;
    std::optional<std::string> vin;

    std::string name() const;  // "VCM" or "CDA[V1]"
    static EntityId parse(std::string_view s);
    friend bool operator==(const EntityId&, const EntityId&) = default;
    friend auto operator<=>(const EntityId&, const EntityId&) = default;
};

}  // namespace unisuf
