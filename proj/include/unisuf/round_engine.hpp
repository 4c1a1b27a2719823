#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "unisuf/crypto.hpp"
#include "unisuf/materials.hpp"

namespace unisuf {

// (VIN, expiry) plus a nonce that keeps two rounds opened at the same instant
// apart. Preparation rounds carry no VIN.
struct UpdateRoundId {
    std::optional<std::string> vin;
    std::uint64_t expiry = 0;
    std::uint64_t nonce = 0;

    Term to_term() const;
    static UpdateRoundId from_term(const Term& t);
    std::string describe() const;

    friend bool operator==(const UpdateRoundId&, const UpdateRoundId&) = default;
    friend auto operator<=>(const UpdateRoundId& a, const UpdateRoundId& b) {
        return std::tie(a.nonce, a.expiry, a.vin) <=> std::tie(b.nonce, b.expiry, b.vin);
    }
};

class RoundFactory {
public:
    UpdateRoundId new_round(std::optional<std::string> vin, std::uint64_t now, std::uint64_t ttl);

private:
    std::uint64_t next_nonce_ = 1;
};

struct MaterialRef {
    MaterialKind kind;
    Digest digest;

    std::string encode() const;  // "Kind:hex"
    static MaterialRef parse(std::string_view s);
    friend bool operator==(const MaterialRef&, const MaterialRef&) = default;
    friend auto operator<=>(const MaterialRef&, const MaterialRef&) = default;
};

MaterialRef material_ref(MaterialKind kind, const Term& t, const CryptoBackend& crypto);

// Per-entity, per-round working state. `materials` holds what the entity has
// learned or built for the round; `scratch` holds task bookkeeping that is
// not a protocol material (counters, flags, half-built values).
struct RoundContext {
    UpdateRoundId round;
    std::string owner;
    std::map<MaterialKind, Term> materials;
    std::map<std::string, Term> scratch;

    bool has(MaterialKind k) const { return materials.count(k) != 0; }
    const Term& get(MaterialKind k) const;
    const Term* find_scratch(const std::string& key) const;
};

// Checks that every declared starting material is present and returns the
// context cut down to exactly that set.
RoundContext pass_context(const RoundContext& ctx, const std::vector<MaterialKind>& starting);

enum class Freshness { Fresh, Duplicate };
enum class Liveness { Live, Expired };

// Persistent log of received messages. The key includes the channel the
// message arrived on, since identical flags legitimately arrive from
// different peers within one round.
class DedupLog {
public:
    Freshness accept(const std::string& channel, const UpdateRoundId& round, const Digest& payload_digest);
    std::size_t size() const { return seen_.size(); }

private:
    std::set<std::tuple<std::string, UpdateRoundId, Digest>> seen_;
};

Liveness check_expiry(const UpdateRoundId& round, std::uint64_t now);

struct HandlingEvent {
    std::uint64_t time = 0;
    UpdateRoundId round;
    std::string entity;
    std::string label;
    std::vector<MaterialRef> materials;
};

struct LogicalClock {
    std::uint64_t now = 0;
};

// Appends one event at now+1. Refuses (RoundExpired) without touching the
// trace or the clock when the round is no longer live at that instant.
const HandlingEvent& emit_event(const RoundContext& ctx, std::string label, std::vector<MaterialRef> materials,
                                LogicalClock& clock, std::vector<HandlingEvent>& trace);

}  // namespace unisuf
