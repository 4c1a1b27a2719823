#include "unisuf/net_sim.hpp"

#include <algorithm>
#include <json.hpp>

#include "unisuf/error.hpp"

namespace unisuf {

using R = Role;

std::string ChannelId::name() const { return a.name() + "<->" + b.name(); }

const std::vector<std::pair<Role, Role>>& channel_table() {
    static const std::vector<std::pair<Role, Role>> table = {
        {R::Supplier, R::ProducerLocalStorage},
        {R::VCM, R::ProducerLocalStorage},
        {R::VCM, R::PSA},
        {R::VCM, R::PSS},
        {R::VCM, R::SoftwareRepository},
        {R::VCM, R::VinDatabase},
        {R::VCM, R::CMS},
        {R::CDA, R::OrderCloudService},
        {R::OrderAgent, R::OrderCloudService},
        {R::OrderAgent, R::VCM},
        {R::VCM, R::PDA},
        {R::VCM, R::PIA},
        {R::PDA, R::PSA},
        {R::PDA, R::CMS},
        {R::PDA, R::PSS},
        {R::PSA, R::CMS},
        {R::PSA, R::PSS},
        {R::PIA, R::PSA},
        {R::PIA, R::CMS},
        {R::PIA, R::PSS},
        {R::VCM, R::VehicleCloudService},
        {R::CDA, R::VehicleCloudService},
        {R::CDA, R::ConsumerLocalStorage},
        {R::CDA, R::CSA},
        {R::CDA, R::SoftwareRepository},
        {R::CDA, R::CIA},
        {R::CIA, R::CSA},
        {R::CIA, R::ConsumerLocalStorage},
        {R::CIA, R::ECU},
    };
    return table;
}

ChannelId channel_between(const EntityId& x, const EntityId& y) {
    for (const auto& [p, q] : channel_table()) {
        const bool forward = x.role == p && y.role == q;
        const bool backward = x.role == q && y.role == p;
        if (!forward && !backward) continue;
        // Two in-vehicle parties must belong to the same vehicle.
        if (is_vehicle_role(x.role) && is_vehicle_role(y.role) && x.vin != y.vin) break;
        ChannelId ch{forward ? x : y, forward ? y : x, Security::SecureReliable};
        if (p == R::CIA && q == R::ECU) ch.security = Security::InsecureReliable;
        return ch;
    }
    fail(ErrorCode::UnknownChannel, "no channel between " + x.name() + " and " + y.name());
}

std::optional<std::string> message_step(ByteView payload) {
    try {
        Term t = Term::decode(payload);
        if (t.is_record(Tag::Message) && !t.children().empty() && t.child(0).is_atom(AtomKind::Text))
            return t.child(0).as_text();
    } catch (const Error&) {
    }
    return std::nullopt;
}

namespace {
std::string direction_of(const Envelope& e) { return e.sender.name() + "->" + e.receiver.name(); }
std::string role_direction(const Envelope& e) {
    return std::string(role_name(e.sender.role)) + "->" + std::string(role_name(e.receiver.role));
}
}  // namespace

Network::Network(std::uint64_t eta, Rng rng) : eta_(eta), rng_(std::move(rng)) {
    if (eta_ == 0) fail(ErrorCode::ConfigError, "eta must be at least 1");
}

std::uint64_t Network::send(Envelope env, std::uint64_t now) {
    auto& counter = seq_[{env.channel.name(), env.sender.name(), env.round.nonce}];
    env.seq = ++counter;
    env.origin = InjectOrigin::Honest;
    Pending p{next_id_++, now, now + rng_.uniform(1, eta_), std::move(env)};
    pending_.push_back(std::move(p));
    return pending_.back().id;
}

std::optional<Pending> Network::step() {
    if (pending_.empty()) return std::nullopt;
    std::uint64_t best = pending_.front().delivery_time;
    for (const auto& p : pending_) best = std::min(best, p.delivery_time);
    std::vector<std::size_t> ties;
    for (std::size_t i = 0; i < pending_.size(); ++i)
        if (pending_[i].delivery_time == best) ties.push_back(i);
    std::size_t pick = ties.size() == 1 ? ties[0] : ties[rng_.uniform(0, ties.size() - 1)];
    Pending out = std::move(pending_[pick]);
    pending_.erase(pending_.begin() + static_cast<std::ptrdiff_t>(pick));
    return out;
}

const Pending* Network::find(std::uint64_t id) const {
    for (const auto& p : pending_)
        if (p.id == id) return &p;
    return nullptr;
}

Pending& Network::get_insecure(std::uint64_t id, const char* action) {
    for (auto& p : pending_) {
        if (p.id != id) continue;
        if (!p.env.channel.insecure())
            fail(ErrorCode::SecureChannelViolation, std::string(action) + " on secure channel " + p.env.channel.name());
        return p;
    }
    fail(ErrorCode::ConfigError, std::string(action) + ": no pending envelope " + std::to_string(id));
}

void Network::record(std::uint64_t now, std::string action, const Envelope& env, std::string detail) {
    log_.push_back(AttackLogEntry{now, std::move(action), env.channel.name(), direction_of(env), env.round.nonce,
                                  env.seq, message_step(env.payload).value_or(""), std::move(detail)});
}

void Network::drop(std::uint64_t id, std::uint64_t now) {
    Pending& p = get_insecure(id, "drop");
    record(now, "drop", p.env, "reliability exception");
    pending_.erase(std::find_if(pending_.begin(), pending_.end(), [&](const Pending& q) { return q.id == id; }));
}

void Network::modify(std::uint64_t id, Bytes payload, std::uint64_t now) {
    Pending& p = get_insecure(id, "modify");
    p.env.payload = std::move(payload);
    p.env.origin = InjectOrigin::Adversary;
    record(now, "modify", p.env, "");
}

std::uint64_t Network::inject(Envelope env, std::uint64_t now) {
    if (!env.channel.insecure())
        fail(ErrorCode::SecureChannelViolation, "inject on secure channel " + env.channel.name());
    env.origin = InjectOrigin::Adversary;
    record(now, "inject", env, "");
    pending_.push_back(Pending{next_id_++, now, now + 1, std::move(env)});
    return pending_.back().id;
}

void Network::delay(std::uint64_t id, std::uint64_t d, std::uint64_t now) {
    Pending& p = get_insecure(id, "delay");
    if (d == 0 || d > eta_)
        fail(ErrorCode::DelayBoundExceeded, "delay " + std::to_string(d) + " outside [1, " + std::to_string(eta_) + "]");
    p.delivery_time = p.send_time + d;
    record(now, "delay", p.env, "deliver at " + std::to_string(p.delivery_time));
}

// ---------------------------------------------------------------------------
// Attack scripts

std::string_view attack_kind_name(AttackAction::Kind k) {
    switch (k) {
        case AttackAction::Kind::Observe: return "observe";
        case AttackAction::Kind::Drop: return "drop";
        case AttackAction::Kind::Modify: return "modify";
        case AttackAction::Kind::Inject: return "inject";
        case AttackAction::Kind::Delay: return "delay";
        case AttackAction::Kind::Replay: return "replay";
    }
    return "?";
}

AttackAction AttackAction::from_json(std::string_view line) {
    using nlohmann::json;
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        fail(ErrorCode::ConfigError, std::string("attack script: ") + e.what());
    }
    try {
        AttackAction a;
        const std::string kind = j.at("action").get<std::string>();
        bool known = false;
        for (auto k : {Kind::Observe, Kind::Drop, Kind::Modify, Kind::Inject, Kind::Delay, Kind::Replay})
            if (attack_kind_name(k) == kind) a.kind = k, known = true;
        if (!known) fail(ErrorCode::ConfigError, "attack script: unknown action '" + kind + "'");
        a.direction = j.at("channel").get<std::string>();
        if (a.direction.find("->") == std::string::npos)
            fail(ErrorCode::ConfigError, "attack script: channel must be written as A->B");
        if (j.contains("at")) a.at = j["at"].get<std::uint64_t>();
        a.repeat = j.value("repeat", false);
        if (j.contains("match")) {
            const auto& m = j["match"];
            if (m.contains("seq")) a.seq = m["seq"].get<std::uint64_t>();
            if (m.contains("digest")) a.digest_prefix = m["digest"].get<std::string>();
            if (m.contains("step")) a.step = m["step"].get<std::string>();
            if (m.contains("round")) a.round = m["round"].get<std::uint64_t>();
        }
        if (j.contains("arg")) {
            const auto& g = j["arg"];
            if (g.contains("flip")) a.flip = g["flip"].get<std::uint64_t>();
            if (g.contains("mask")) a.mask = g["mask"].get<std::uint8_t>();
            if (g.contains("payload")) a.payload = from_hex(g["payload"].get<std::string>());
            a.substitute = g.value("substitute", false);
            if (g.contains("replay")) a.replay_step = g["replay"].get<std::string>();
            a.delay_by = g.value("by", std::uint64_t{0});
            a.count = g.value("count", std::uint64_t{1});
        }
        if (a.kind == Kind::Modify && !a.flip && !a.payload && !a.substitute)
            fail(ErrorCode::ConfigError, "attack script: modify needs flip, payload or substitute");
        if (a.kind == Kind::Inject && !a.payload && !a.replay_step)
            fail(ErrorCode::ConfigError, "attack script: inject needs payload or replay");
        if (a.kind == Kind::Modify && a.mask == 0) fail(ErrorCode::ConfigError, "attack script: mask must be nonzero");
        return a;
    } catch (const json::exception& e) {
        fail(ErrorCode::ConfigError, std::string("attack script: ") + e.what());
    }
}

std::string AttackAction::to_json() const {
    nlohmann::json j;
    j["action"] = attack_kind_name(kind);
    j["channel"] = direction;
    if (at) j["at"] = *at;
    if (repeat) j["repeat"] = true;
    nlohmann::json m = nlohmann::json::object();
    if (seq) m["seq"] = *seq;
    if (digest_prefix) m["digest"] = *digest_prefix;
    if (step) m["step"] = *step;
    if (round) m["round"] = *round;
    if (!m.empty()) j["match"] = m;
    nlohmann::json g = nlohmann::json::object();
    if (flip) g["flip"] = *flip, g["mask"] = mask;
    if (payload) g["payload"] = to_hex(*payload);
    if (substitute) g["substitute"] = true;
    if (replay_step) g["replay"] = *replay_step;
    if (kind == Kind::Delay) g["by"] = delay_by;
    if (kind == Kind::Replay) g["count"] = count;
    if (!g.empty()) j["arg"] = g;
    return j.dump();
}

std::vector<AttackAction> parse_attack_script(std::string_view jsonl) {
    std::vector<AttackAction> out;
    std::size_t pos = 0;
    while (pos <= jsonl.size()) {
        auto nl = jsonl.find('\n', pos);
        auto line = jsonl.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        auto first = line.find_first_not_of(" \t\r");
        if (first != std::string_view::npos && line[first] != '#') out.push_back(AttackAction::from_json(line));
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    return out;
}

bool ScriptedAdversary::matches(const AttackAction& a, const Pending& p, const std::string& dir,
                                const std::string& step, std::uint64_t round_ordinal, std::uint64_t now,
                                const CryptoBackend& crypto) const {
    if (a.direction != dir) return false;
    if (a.at && now < *a.at) return false;
    if (a.seq && p.env.seq != *a.seq) return false;
    if (a.step && step != *a.step) return false;
    if (a.round && round_ordinal != *a.round) return false;
    if (a.digest_prefix && crypto.hash(p.env.payload).hex().rfind(*a.digest_prefix, 0) != 0) return false;
    return true;
}

std::optional<Bytes> ScriptedAdversary::recorded(const std::string& step,
                                                 const std::optional<UpdateRoundId>& exclude_round) const {
    for (auto it = history_.rbegin(); it != history_.rend(); ++it)
        if (it->step == step && (!exclude_round || it->round != *exclude_round)) return it->payload;
    return std::nullopt;
}

namespace {

// Value bytes of the message items, skipping the step id text so a flip
// always lands in protocol content.
std::vector<std::size_t> item_offsets(const Bytes& payload) {
    auto offs = value_byte_offsets(payload);
    if (auto step = message_step(payload)) {
        std::size_t skip = std::min(step->size(), offs.size());
        offs.erase(offs.begin(), offs.begin() + static_cast<std::ptrdiff_t>(skip));
    }
    return offs;
}

}  // namespace

void ScriptedAdversary::apply(Network& net, const AttackAction& a, std::uint64_t id, std::uint64_t now) {
    const Pending* p = net.find(id);
    if (!p) return;  // already dropped by an earlier line
    Envelope env = p->env;
    switch (a.kind) {
        case AttackAction::Kind::Observe:
            break;
        case AttackAction::Kind::Drop:
            net.drop(id, now);
            break;
        case AttackAction::Kind::Delay:
            net.delay(id, a.delay_by, now);
            break;
        case AttackAction::Kind::Modify: {
            Bytes payload = env.payload;
            if (a.payload) {
                payload = *a.payload;
            } else if (a.substitute) {
                auto old = recorded(message_step(env.payload).value_or(""), env.round);
                if (!old) return;
                payload = *old;
            } else {
                auto offs = item_offsets(payload);
                if (offs.empty()) return;
                payload[offs[*a.flip % offs.size()]] ^= a.mask;
            }
            net.modify(id, std::move(payload), now);
            break;
        }
        case AttackAction::Kind::Inject: {
            Envelope copy = env;
            if (a.payload) {
                copy.payload = *a.payload;
            } else {
                auto old = recorded(*a.replay_step, env.round);
                if (!old) return;
                copy.payload = *old;
            }
            net.inject(std::move(copy), now);
            break;
        }
        case AttackAction::Kind::Replay:
            for (std::uint64_t i = 0; i < a.count; ++i) net.inject(env, now);
            break;
    }
}

void ScriptedAdversary::on_send(Network& net, std::uint64_t pending_id, std::uint64_t now,
                                const CryptoBackend& crypto) {
    const Pending* p = net.find(pending_id);
    if (!p || !p->env.channel.insecure()) return;
    const Envelope& env = p->env;

    knowledge_.observe_bytes(env.payload);
    knowledge_.observe(env.round.to_term());
    knowledge_.observe(Term::number(env.seq));

    const std::string dir = role_direction(env);
    const std::string step = message_step(env.payload).value_or("");
    auto& seen = rounds_seen_[env.channel.name()];
    if (std::find(seen.begin(), seen.end(), env.round) == seen.end()) seen.push_back(env.round);
    const std::uint64_t ordinal =
        static_cast<std::uint64_t>(std::find(seen.begin(), seen.end(), env.round) - seen.begin()) + 1;
    // Record before acting so that a substitute never picks this very send.
    ObservedMessage obs{dir, env.round, step, env.payload, now};

    fired_.resize(script_.size(), false);
    for (std::size_t i = 0; i < script_.size(); ++i) {
        if (fired_[i] && !script_[i].repeat) continue;
        const Pending* cur = net.find(pending_id);
        if (!cur || !matches(script_[i], *cur, dir, step, ordinal, now, crypto)) continue;
        fired_[i] = true;
        apply(net, script_[i], pending_id, now);
    }
    history_.push_back(std::move(obs));
}

}  // namespace unisuf
