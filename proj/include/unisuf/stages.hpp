#pragma once

#include <optional>
#include <string>
#include <vector>

#include "unisuf/world.hpp"

namespace unisuf {

enum class Outcome { Completed, ValidationFailure, Expired };

std::string_view outcome_name(Outcome o);

// Runs one sub-problem of an open round: checks the starting contexts,
// kicks off the initiators phase by phase and lets the network settle.
// A sub-problem that stalls (a dropped message, say) runs the round into
// its deadline. The attacker's knowledge is snapshotted at the end either
// way.
Outcome run_subproblem(World& world, SubProblem sp, const UpdateRoundId& round);

Outcome run_secure_software_files(World& w, const UpdateRoundId& r);
Outcome run_upload_software_files(World& w, const UpdateRoundId& r);
Outcome run_order_initiation(World& w, const UpdateRoundId& r);
Outcome run_create_software_list(World& w, const UpdateRoundId& r);
Outcome run_create_download_instructions(World& w, const UpdateRoundId& r);
Outcome run_generate_installation_materials(World& w, const UpdateRoundId& r);
Outcome run_create_installation_instructions(World& w, const UpdateRoundId& r);
Outcome run_package_the_instructions(World& w, const UpdateRoundId& r);
Outcome run_notify_order_ready(World& w, const UpdateRoundId& r);
Outcome run_download_vuup(World& w, const UpdateRoundId& r);
Outcome run_download_software_files(World& w, const UpdateRoundId& r);
Outcome run_decrypt_installation_instructions(World& w, const UpdateRoundId& r);
Outcome run_setup_installation_environment(World& w, const UpdateRoundId& r);
Outcome run_stream_update_to_ecu(World& w, const UpdateRoundId& r);

// Sub-problems of a stage, in execution order.
std::vector<SubProblem> stage_plan(Stage stage);
std::optional<Stage> parse_stage(std::string_view name);

struct RoundResult {
    UpdateRoundId round;
    std::vector<std::pair<SubProblem, Outcome>> outcomes;
    bool completed() const;
};

// Opens a round, runs the plan and closes the round: a clean round halts
// every participant, anything else is run into its deadline.
RoundResult run_round(World& world, std::optional<std::string> vin, const std::vector<SubProblem>& plan);
RoundResult run_round(World& world, std::optional<std::string> vin, const std::vector<SubProblem>& plan,
                      std::uint64_t ttl);
// Starts an already opened round's remaining sub-problems (from `first`).
RoundResult continue_round(World& world, const UpdateRoundId& round, const std::vector<SubProblem>& plan,
                           std::size_t first, RoundResult partial);

// One release cycle: the supplier stages `version`, a preparation round
// publishes it, then each vehicle runs a vehicle round in turn.
std::vector<RoundResult> run_cycle(World& world, std::uint64_t version, const std::vector<Stage>& stages);

// True when every label of the sub-problem has been emitted in the round.
bool labels_complete(const World& world, SubProblem sp, const UpdateRoundId& round);

}  // namespace unisuf
