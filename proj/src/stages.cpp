#include "unisuf/stages.hpp"

#include <algorithm>

#include "unisuf/error.hpp"

namespace unisuf {

std::string_view outcome_name(Outcome o) {
    switch (o) {
        case Outcome::Completed: return "completed";
        case Outcome::ValidationFailure: return "validation_failure";
        case Outcome::Expired: return "expired";
    }
    return "?";
}

bool labels_complete(const World& world, SubProblem sp, const UpdateRoundId& round) {
    const auto& spec = subproblem(sp);
    std::vector<bool> seen(static_cast<std::size_t>(spec.label_count()), false);
    for (const auto& rec : world.trace().records) {
        const auto* ev = std::get_if<HandlingEvent>(&rec);
        if (!ev || ev->round != round) continue;
        auto parsed = parse_label(ev->label);
        if (parsed && parsed->first->id == sp) seen[static_cast<std::size_t>(parsed->second - 1)] = true;
    }
    return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

namespace {

Outcome settle(World& world, SubProblem sp, const UpdateRoundId& round) {
    if (world.expired(round)) return Outcome::Expired;
    if (world.aborted(round)) return Outcome::ValidationFailure;
    if (labels_complete(world, sp, round)) return Outcome::Completed;
    // Nothing left in flight and the sub-problem is stuck: the round can
    // only end at its deadline.
    world.advance_to(round.expiry);
    return Outcome::Expired;
}

Outcome execute(World& world, SubProblem sp, const UpdateRoundId& round) {
    if (world.expired(round)) return Outcome::Expired;
    if (world.aborted(round)) return Outcome::ValidationFailure;
    const auto& spec = subproblem(sp);
    for (const auto& [role, kinds] : spec.starting_contexts) {
        EntityId id = world.id_for(role, round);
        const RoundContext* ctx = world.context(id, round);
        try {
            if (!ctx) fail(ErrorCode::MissingStartingMaterial, id.name() + " holds no context for the round");
            pass_context(*ctx, kinds);
        } catch (const Error& e) {
            world.note(round, id.name(), std::string("abort: ") + e.what());
            world.mark_aborted(round);
            return Outcome::ValidationFailure;
        }
    }
    world.set_current(round, sp);
    for (const auto& phase : spec.kickoff) {
        for (Role r : phase) world.kick(r, round, sp);
        world.run_until_quiet();
        if (world.expired(round) || world.aborted(round)) break;
    }
    return settle(world, sp, round);
}

}  // namespace

Outcome run_subproblem(World& world, SubProblem sp, const UpdateRoundId& round) {
    Outcome o = execute(world, sp, round);
    world.snapshot_secrets(round, sp);
    return o;
}

#define UNISUF_WRAP(fn, id) \
    Outcome fn(World& w, const UpdateRoundId& r) { return run_subproblem(w, SubProblem::id, r); }
UNISUF_WRAP(run_secure_software_files, SecureSoftwareFiles)
UNISUF_WRAP(run_upload_software_files, UploadSoftwareFiles)
UNISUF_WRAP(run_order_initiation, OrderInitiation)
UNISUF_WRAP(run_create_software_list, CreateSoftwareList)
UNISUF_WRAP(run_create_download_instructions, CreateDownloadInstructions)
UNISUF_WRAP(run_generate_installation_materials, GenerateInstallationMaterials)
UNISUF_WRAP(run_create_installation_instructions, CreateInstallationInstructions)
UNISUF_WRAP(run_package_the_instructions, PackageTheInstructions)
UNISUF_WRAP(run_notify_order_ready, NotifyOrderReady)
UNISUF_WRAP(run_download_vuup, DownloadVuup)
UNISUF_WRAP(run_download_software_files, DownloadSoftwareFiles)
UNISUF_WRAP(run_decrypt_installation_instructions, DecryptInstallationInstructions)
UNISUF_WRAP(run_setup_installation_environment, SetupInstallationEnvironment)
UNISUF_WRAP(run_stream_update_to_ecu, StreamUpdateToEcu)
#undef UNISUF_WRAP

std::vector<SubProblem> stage_plan(Stage stage) {
    std::vector<SubProblem> out;
    for (const auto& s : all_subproblems())
        if (s.stage == stage) out.push_back(s.id);
    return out;
}

std::optional<Stage> parse_stage(std::string_view name) {
    for (Stage s : {Stage::Preparation, Stage::Encapsulation, Stage::Decapsulation})
        if (stage_name(s) == name) return s;
    return std::nullopt;
}

bool RoundResult::completed() const {
    return std::all_of(outcomes.begin(), outcomes.end(),
                       [](const auto& o) { return o.second == Outcome::Completed; });
}

RoundResult continue_round(World& world, const UpdateRoundId& round, const std::vector<SubProblem>& plan,
                           std::size_t first, RoundResult partial) {
    for (std::size_t i = first; i < plan.size(); ++i)
        partial.outcomes.emplace_back(plan[i], run_subproblem(world, plan[i], round));
    if (partial.completed())
        world.halt_all(round);
    else
        world.advance_to(round.expiry);
    return partial;
}

RoundResult run_round(World& world, std::optional<std::string> vin, const std::vector<SubProblem>& plan,
                      std::uint64_t ttl) {
    UpdateRoundId round = world.open_round(std::move(vin), plan, ttl);
    return continue_round(world, round, plan, 0, RoundResult{round, {}});
}

RoundResult run_round(World& world, std::optional<std::string> vin, const std::vector<SubProblem>& plan) {
    return run_round(world, std::move(vin), plan, world.config().round_ttl);
}

std::vector<RoundResult> run_cycle(World& world, std::uint64_t version, const std::vector<Stage>& stages) {
    auto has = [&](Stage s) { return std::find(stages.begin(), stages.end(), s) != stages.end(); };
    std::vector<RoundResult> out;
    world.stage_release(version);
    if (has(Stage::Preparation)) out.push_back(run_round(world, std::nullopt, stage_plan(Stage::Preparation)));
    std::vector<SubProblem> plan;
    for (Stage s : {Stage::Encapsulation, Stage::Decapsulation})
        if (has(s)) {
            auto p = stage_plan(s);
            plan.insert(plan.end(), p.begin(), p.end());
        }
    if (!plan.empty())
        for (const auto& v : world.config().vehicles) out.push_back(run_round(world, v.vin, plan));
    return out;
}

}  // namespace unisuf
