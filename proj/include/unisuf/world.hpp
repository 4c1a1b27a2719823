#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "unisuf/entities.hpp"
#include "unisuf/net_sim.hpp"
#include "unisuf/trace.hpp"

namespace unisuf {

struct VehicleConfig {
    std::string vin;
    std::uint64_t initial_ecu_version = 0;
    std::string model = "generic";
};

struct WorldConfig {
    std::uint64_t seed = 1;
    std::string backend = "sodium";
    std::uint64_t eta = 8;
    std::uint64_t round_ttl = 1000;
    std::string software_id = "ecu-fw";
    std::vector<VehicleConfig> vehicles;
    std::vector<AttackAction> script;
};

struct RegistryEntry {
    MaterialRecord record;
    Term term;
};

// Everything a simulation run touches: entities, network, adversary, clock
// and the trace being written. Copyable, so a run can be forked at any
// quiet point and continued along different adversary choices.
class World {
public:
    explicit World(WorldConfig config);

    const WorldConfig& config() const { return config_; }
    const CryptoBackend& crypto() const { return *crypto_; }
    std::uint64_t now() const { return clock_.now; }
    const Trace& trace() const { return trace_; }
    const Directory& directory() const { return directory_; }
    const ScriptedAdversary& adversary() const { return adversary_; }
    ScriptedAdversary& adversary() { return adversary_; }
    Network& network() { return net_; }
    const Network& network() const { return net_; }
    const EntityState& entity(const EntityId& id) const;
    EntityState& entity(const EntityId& id);
    const std::map<std::string, RegistryEntry>& registry() const { return registry_; }
    std::uint64_t task_deliveries() const { return task_deliveries_; }
    std::uint64_t duplicates() const { return duplicates_; }

    void set_script(std::vector<AttackAction> script) { adversary_.set_script(std::move(script)); }

    // Stages a new supplier release and returns the signed-over software.
    Software stage_release(std::uint64_t version);
    UpdateRoundId open_round(std::optional<std::string> vin, std::vector<SubProblem> plan);
    UpdateRoundId open_round(std::optional<std::string> vin, std::vector<SubProblem> plan, std::uint64_t ttl);

    void set_current(const UpdateRoundId& round, SubProblem sp) { current_[round] = sp; }
    bool aborted(const UpdateRoundId& round) const { return aborted_.count(round) != 0; }
    bool expired(const UpdateRoundId& round) const { return expired_.count(round) != 0; }
    void mark_aborted(const UpdateRoundId& round) { aborted_.insert(round); }

    EntityId id_for(Role role, const UpdateRoundId& round) const;
    // The entity's context for the round, if it holds one.
    const RoundContext* context(const EntityId& id, const UpdateRoundId& round) const;

    // Runs the initiation task of `role` for a sub-problem. False if the
    // task failed (the entity is then halted and the round aborted).
    bool kick(Role role, const UpdateRoundId& round, SubProblem sp);
    // Delivers until nothing is pending.
    void run_until_quiet();
    // Moves the clock forward (never back) and expires rounds whose
    // deadline has passed.
    void advance_to(std::uint64_t t);
    // Every entity still holding a context for the round runs its halt task.
    void halt_all(const UpdateRoundId& round);
    // Records the attacker's knowledge and the secrets of a sub-problem.
    void snapshot_secrets(const UpdateRoundId& round, SubProblem sp);

    // Appends a status record outside any handler.
    void note(const UpdateRoundId& round, const std::string& entity, std::string text);

    // Re-sends a payload on an insecure link as the adversary would.
    void inject(const std::string& direction, const UpdateRoundId& round, Bytes payload);

    // Secrets of a sub-problem as concrete terms.
    std::vector<std::pair<std::string, Term>> resolve_secrets(const UpdateRoundId& round, SubProblem sp) const;

private:
    void setup();
    void seed_knowledge();
    EntityState& add_entity(EntityId id, bool with_keys);
    RoundContext& context_for(EntityState& e, const UpdateRoundId& round);
    Services services(const RoundContext& ctx);
    void deliver(const Pending& p);
    // Commits a handler's outbox. On failure the entity is halted with an
    // abort record and the round is marked aborted.
    bool run_task(EntityState& e, const UpdateRoundId& round, const std::function<void(RoundContext&, Services&)>& task);
    void commit(EntityState& e, const UpdateRoundId& round, std::vector<Action>& out);
    void register_material(const EntityState& e, const UpdateRoundId& round, MaterialKind kind, const Term& t);
    void emit(EntityState& e, const UpdateRoundId& round, std::string label, std::vector<MaterialRef> materials);
    void stop_entity(EntityState& e, const UpdateRoundId& round);
    void process_expiry();
    SubProblem current(const UpdateRoundId& round) const;

    WorldConfig config_;
    std::shared_ptr<const CryptoBackend> crypto_;
    Rng crypto_rng_;
    Rng content_rng_;
    LogicalClock clock_;
    RoundFactory rounds_;
    Network net_;
    ScriptedAdversary adversary_;
    std::map<EntityId, EntityState> entities_;
    Directory directory_;
    std::map<std::string, PrivateKey> private_keys_;
    Trace trace_;
    std::map<std::string, RegistryEntry> registry_;
    std::map<UpdateRoundId, SubProblem> current_;
    std::set<UpdateRoundId> open_;
    std::set<UpdateRoundId> aborted_;
    std::set<UpdateRoundId> expired_;
    std::optional<Term> release_software_;
    std::optional<Term> release_key_;
    std::map<std::string, std::uint64_t> onboard_;  // vin -> version reported at order time
    std::uint64_t task_deliveries_ = 0;
    std::uint64_t duplicates_ = 0;
};

}  // namespace unisuf
