#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "unisuf/adversary.hpp"
#include "unisuf/rng.hpp"
#include "unisuf/roles.hpp"
#include "unisuf/round_engine.hpp"

namespace unisuf {

enum class Security { SecureReliable, InsecureReliable };

struct ChannelId {
    EntityId a;
    EntityId b;
    Security security = Security::SecureReliable;

    std::string name() const;  // "VCM<->PSS"
    bool insecure() const { return security == Security::InsecureReliable; }
    friend bool operator==(const ChannelId&, const ChannelId&) = default;
};

// Role pairs that communicate. Exactly one of them is insecure.
const std::vector<std::pair<Role, Role>>& channel_table();
// Resolves the channel between two entities, or throws UnknownChannel.
ChannelId channel_between(const EntityId& x, const EntityId& y);

enum class InjectOrigin { Honest, Adversary };

struct Envelope {
    ChannelId channel;
    EntityId sender;
    EntityId receiver;
    UpdateRoundId round;
    std::uint64_t seq = 0;
    Bytes payload;
    InjectOrigin origin = InjectOrigin::Honest;
};

// Step id ("D17.17") of an encoded protocol message, if it has one.
std::optional<std::string> message_step(ByteView payload);

struct Pending {
    std::uint64_t id = 0;
    std::uint64_t send_time = 0;
    std::uint64_t delivery_time = 0;
    Envelope env;
};

struct AttackLogEntry {
    std::uint64_t time = 0;
    std::string action;
    std::string channel;
    std::string direction;
    std::uint64_t round_nonce = 0;
    std::uint64_t seq = 0;
    std::string step;
    std::string detail;
};

// Pending deliveries plus the adversary's levers on them. Honest sends are
// delivered at a scheduler-chosen time in [now+1, now+eta].
class Network {
public:
    Network(std::uint64_t eta, Rng rng);

    std::uint64_t eta() const { return eta_; }
    std::uint64_t send(Envelope env, std::uint64_t now);
    // Removes and returns the earliest pending envelope; ties are broken by
    // the seeded RNG so the order is reproducible but not FIFO.
    std::optional<Pending> step();
    bool empty() const { return pending_.empty(); }
    std::size_t size() const { return pending_.size(); }
    const Pending* find(std::uint64_t id) const;

    void drop(std::uint64_t id, std::uint64_t now);
    void modify(std::uint64_t id, Bytes payload, std::uint64_t now);
    std::uint64_t inject(Envelope env, std::uint64_t now);
    void delay(std::uint64_t id, std::uint64_t d, std::uint64_t now);

    const std::vector<AttackLogEntry>& attack_log() const { return log_; }

private:
    Pending& get_insecure(std::uint64_t id, const char* action);
    void record(std::uint64_t now, std::string action, const Envelope& env, std::string detail);

    std::uint64_t eta_;
    Rng rng_;
    std::uint64_t next_id_ = 1;
    std::vector<Pending> pending_;
    std::map<std::tuple<std::string, std::string, std::uint64_t>, std::uint64_t> seq_;
    std::vector<AttackLogEntry> log_;
};

// One line of an attack script. The trigger is the first send on the given
// direction ("CIA->ECU") that matches every present field.
struct AttackAction {
    enum class Kind { Observe, Drop, Modify, Inject, Delay, Replay };
    Kind kind = Kind::Observe;
    std::string direction;
    std::optional<std::uint64_t> at;           // earliest logical time
    std::optional<std::uint64_t> seq;
    std::optional<std::string> digest_prefix;  // hex prefix of Hash(payload)
    std::optional<std::string> step;           // protocol step id, e.g. "D17.17"
    std::optional<std::uint64_t> round;        // n-th round seen on this link, 1-based
    bool repeat = false;

    // Modify: flip one value byte of the message items (index wraps), set the
    // payload outright, or substitute the same step's payload from an
    // earlier round. Inject: an explicit payload or a recorded step replayed
    // under the current round id.
    std::optional<std::uint64_t> flip;
    std::uint8_t mask = 0x01;
    std::optional<Bytes> payload;
    bool substitute = false;
    std::optional<std::string> replay_step;
    std::uint64_t delay_by = 0;
    std::uint64_t count = 1;

    static AttackAction from_json(std::string_view line);
    std::string to_json() const;
};

std::string_view attack_kind_name(AttackAction::Kind k);
std::vector<AttackAction> parse_attack_script(std::string_view jsonl);

struct ObservedMessage {
    std::string direction;
    UpdateRoundId round;
    std::string step;
    Bytes payload;
    std::uint64_t time = 0;  // logical time of the send
};

// Dolev-Yao attacker sitting on the insecure link: records and learns every
// envelope there and applies scripted actions to matching sends.
class ScriptedAdversary {
public:
    ScriptedAdversary() = default;
    explicit ScriptedAdversary(std::vector<AttackAction> script) : script_(std::move(script)) {}

    void learn(const Term& t) { knowledge_.observe(t); }
    // Swaps the script while keeping what has been learned and recorded.
    void set_script(std::vector<AttackAction> script) {
        script_ = std::move(script);
        fired_.clear();
    }
    void on_send(Network& net, std::uint64_t pending_id, std::uint64_t now, const CryptoBackend& crypto);

    const AdversaryKnowledge& knowledge() const { return knowledge_; }
    const std::vector<ObservedMessage>& history() const { return history_; }
    const std::vector<AttackAction>& script() const { return script_; }

private:
    bool matches(const AttackAction& a, const Pending& p, const std::string& dir, const std::string& step,
                 std::uint64_t round_ordinal, std::uint64_t now, const CryptoBackend& crypto) const;
    void apply(Network& net, const AttackAction& a, std::uint64_t id, std::uint64_t now);
    std::optional<Bytes> recorded(const std::string& step, const std::optional<UpdateRoundId>& before_round) const;

    std::vector<AttackAction> script_;
    std::vector<bool> fired_;
    AdversaryKnowledge knowledge_;
    std::vector<ObservedMessage> history_;
    std::map<std::string, std::vector<UpdateRoundId>> rounds_seen_;
};

}  // namespace unisuf
