#include "unisuf/roles.hpp"

#include <array>

#include "unisuf/error.hpp"

namespace unisuf {

namespace {
constexpr std::array<std::string_view, kRoleCount> kNames = {
    "Supplier", "PLS", "VCM", "PSS", "CMS", "PSA", "Database", "OCS", "OA", "PDA",
    "PIA",      "VinDB", "VCS", "SR",  "CLS", "CDA", "CSA",     "CIA", "ECU",
};
}

std::string_view role_name(Role r) { return kNames.at(static_cast<std::size_t>(r)); }

std::optional<Role> parse_role(std::string_view s) {
    for (std::size_t i = 0; i < kNames.size(); ++i)
        if (kNames[i] == s) return static_cast<Role>(i);
    return std::nullopt;
}

bool is_vehicle_role(Role r) {
    return r == Role::CDA || r == Role::CSA || r == Role::CIA || r == Role::ConsumerLocalStorage || r == Role::ECU;
}

std::string EntityId::name() const {
    std::string out(role_name(role));
    if (vin) out += "[" + *vin + "]";
    return out;
}

EntityId EntityId::parse(std::string_view s) {
    std::optional<std::string> vin;
    auto open = s.find('[');
    std::string_view base = s;
    if (open != std::string_view::npos) {
        if (s.back() != ']') fail(ErrorCode::MalformedTrace, "bad entity name '" + std::string(s) + "'");
        vin = std::string(s.substr(open + 1, s.size() - open - 2));
        base = s.substr(0, open);
    }
    auto role = parse_role(base);
    if (!role) fail(ErrorCode::MalformedTrace, "unknown entity '" + std::string(s) + "'");
    return EntityId{*role, vin};
}

}  // namespace unisuf
