#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "unisuf/stages.hpp"
#include "unisuf/verifier.hpp"
#include "unisuf/world.hpp"

namespace unisuf {

struct ScenarioConfig {
    std::string name;
    WorldConfig world;
    std::vector<std::uint64_t> versions;  // one release cycle per entry
    std::vector<Stage> stages = {Stage::Preparation, Stage::Encapsulation, Stage::Decapsulation};
    std::set<Requirement> checks;  // empty means all
    // Size the round lifetime so that the first vehicle round's step-17
    // software delivery can be pushed exactly onto the deadline. Found by
    // a silent honest run of the same configuration.
    bool ttl_probe = false;

    // Relative adversary_script paths resolve against `base_dir`.
    static ScenarioConfig from_json(std::string_view text, const std::filesystem::path& base_dir = {});
    static ScenarioConfig from_file(const std::filesystem::path& path);
};

struct ScenarioResult {
    std::string trace_jsonl;
    std::string report_jsonl;
    std::string knowledge_dump;
    std::string attack_log_jsonl;
    std::vector<Verdict> verdicts;
    std::vector<RoundResult> rounds;
    std::uint64_t task_deliveries = 0;
    std::uint64_t duplicates = 0;
    int exit_code = 0;
};

ScenarioResult run_scenario(const ScenarioConfig& config);
// Runs the configuration and returns the world for inspection.
World run_world(const ScenarioConfig& config);

// Re-checks a trace file's contents. Exit code 0 all Pass, 1 otherwise.
ScenarioResult verify_trace_text(std::string_view trace_jsonl, const std::set<Requirement>& checks = {});

void write_artifacts(const ScenarioResult& result, const std::filesystem::path& out_dir);

std::vector<std::string> bundled_scenarios();
std::string bundled_scenario_json(std::string_view name);
ScenarioConfig bundled_scenario(std::string_view name);

// Time of the first send of `step` in the first vehicle round of an
// unattacked run of `config`.
std::uint64_t probe_send_time(const ScenarioConfig& config, std::string_view step);

}  // namespace unisuf
