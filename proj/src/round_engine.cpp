#include "unisuf/round_engine.hpp"

#include "unisuf/error.hpp"

namespace unisuf {

Term UpdateRoundId::to_term() const {
    return Term::record(Tag::RoundId,
                        {vin ? Term::text(*vin) : Term::data({}), Term::number(expiry), Term::number(nonce)});
}

UpdateRoundId UpdateRoundId::from_term(const Term& t) {
    const Term& r = t.expect_record(Tag::RoundId, 3);
    UpdateRoundId id;
    if (r.child(0).is_atom(AtomKind::Text))
        id.vin = r.child(0).as_text();
    else if (!r.child(0).is_atom(AtomKind::Data) || !r.child(0).bytes().empty())
        fail(ErrorCode::MalformedEncoding, "round VIN must be text or empty");
    id.expiry = r.child(1).as_number();
    id.nonce = r.child(2).as_number();
    return id;
}

std::string UpdateRoundId::describe() const {
    return "(" + (vin ? *vin : std::string("-")) + ", t_e=" + std::to_string(expiry) + ", #" + std::to_string(nonce) +
           ")";
}

UpdateRoundId RoundFactory::new_round(std::optional<std::string> vin, std::uint64_t now, std::uint64_t ttl) {
    if (ttl == 0) fail(ErrorCode::ConfigError, "round ttl must be positive");
    return UpdateRoundId{std::move(vin), now + ttl, next_nonce_++};
}

std::string MaterialRef::encode() const { return std::string(material_kind_name(kind)) + ":" + digest.hex(); }

MaterialRef MaterialRef::parse(std::string_view s) {
    auto colon = s.find(':');
    if (colon == std::string_view::npos) fail(ErrorCode::MalformedTrace, "digest entry lacks a kind");
    auto kind = parse_material_kind(s.substr(0, colon));
    if (!kind) fail(ErrorCode::MalformedTrace, "unknown material kind '" + std::string(s.substr(0, colon)) + "'");
    try {
        return MaterialRef{*kind, Digest{from_hex(s.substr(colon + 1))}};
    } catch (const Error&) {
        fail(ErrorCode::MalformedTrace, "bad digest hex");
    }
}

MaterialRef material_ref(MaterialKind kind, const Term& t, const CryptoBackend& crypto) {
    return MaterialRef{kind, term_digest(t, crypto)};
}

const Term& RoundContext::get(MaterialKind k) const {
    auto it = materials.find(k);
    if (it == materials.end())
        fail(ErrorCode::MissingStartingMaterial, owner + " lacks " + std::string(material_kind_name(k)));
    return it->second;
}

const Term* RoundContext::find_scratch(const std::string& key) const {
    auto it = scratch.find(key);
    return it == scratch.end() ? nullptr : &it->second;
}

RoundContext pass_context(const RoundContext& ctx, const std::vector<MaterialKind>& starting) {
    RoundContext out{ctx.round, ctx.owner, {}, {}};
    for (auto k : starting) out.materials.emplace(k, ctx.get(k));
    return out;
}

Freshness DedupLog::accept(const std::string& channel, const UpdateRoundId& round, const Digest& payload_digest) {
    return seen_.emplace(channel, round, payload_digest).second ? Freshness::Fresh : Freshness::Duplicate;
}

Liveness check_expiry(const UpdateRoundId& round, std::uint64_t now) {
    return now >= round.expiry ? Liveness::Expired : Liveness::Live;
}

const HandlingEvent& emit_event(const RoundContext& ctx, std::string label, std::vector<MaterialRef> materials,
                                LogicalClock& clock, std::vector<HandlingEvent>& trace) {
    const std::uint64_t t = clock.now + 1;
    if (check_expiry(ctx.round, t) == Liveness::Expired)
        fail(ErrorCode::RoundExpired, "round " + ctx.round.describe() + " expired before " + label);
    clock.now = t;
    trace.push_back(HandlingEvent{t, ctx.round, ctx.owner, std::move(label), std::move(materials)});
    return trace.back();
}

}  // namespace unisuf
