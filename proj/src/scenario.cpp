#include "unisuf/scenario.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "unisuf/error.hpp"

namespace unisuf {

using nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) fail(ErrorCode::ConfigError, "cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) fail(ErrorCode::ConfigError, "cannot write " + p.string());
    out << text;
}

std::vector<AttackAction> parse_inline_script(const json& j) {
    if (j.is_string()) return parse_attack_script(j.get<std::string>());
    if (!j.is_array()) fail(ErrorCode::ConfigError, "adversary must be an array of actions or JSONL text");
    std::vector<AttackAction> out;
    for (const auto& a : j) out.push_back(AttackAction::from_json(a.dump()));
    return out;
}

const std::set<std::string> kKnownKeys = {"name",        "seed",     "backend",           "eta",
                                          "round_ttl",   "vehicles", "supplier_versions", "stages",
                                          "adversary_script", "adversary", "checks", "ttl_probe"};

}  // namespace

ScenarioConfig ScenarioConfig::from_json(std::string_view text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorCode::ConfigError, std::string("config is not JSON: ") + e.what());
    }
    if (!j.is_object()) fail(ErrorCode::ConfigError, "config must be an object");
    ScenarioConfig c;
    try {
        for (auto it = j.begin(); it != j.end(); ++it)
            if (!kKnownKeys.count(it.key())) fail(ErrorCode::ConfigError, "unknown config field '" + it.key() + "'");
        c.name = j.value("name", std::string("custom"));
        c.world.seed = j.at("seed").get<std::uint64_t>();
        c.world.backend = j.value("backend", std::string("sodium"));
        if (c.world.backend != "sodium" && c.world.backend != "mock")
            fail(ErrorCode::ConfigError, "backend must be 'sodium' or 'mock'");
        c.world.eta = j.value("eta", std::uint64_t{8});
        if (c.world.eta < 1) fail(ErrorCode::ConfigError, "eta must be at least 1");
        c.world.round_ttl = j.value("round_ttl", std::uint64_t{1000});
        if (c.world.round_ttl < 1) fail(ErrorCode::ConfigError, "round_ttl must be positive");
        const auto& vehicles = j.at("vehicles");
        if (!vehicles.is_array() || vehicles.empty()) fail(ErrorCode::ConfigError, "vehicles must be a non-empty list");
        for (const auto& v : vehicles)
            c.world.vehicles.push_back(VehicleConfig{v.at("vin").get<std::string>(),
                                                     v.value("initial_ecu_version", std::uint64_t{0}),
                                                     v.value("model", std::string("generic"))});
        const auto& sv = j.at("supplier_versions");
        if (!sv.is_object() || sv.size() != 1)
            fail(ErrorCode::ConfigError, "supplier_versions must map exactly one software id to its versions");
        c.world.software_id = sv.begin().key();
        c.versions = sv.begin().value().get<std::vector<std::uint64_t>>();
        if (c.versions.empty()) fail(ErrorCode::ConfigError, "supplier_versions lists no versions");
        if (j.contains("stages")) {
            c.stages.clear();
            for (const auto& s : j.at("stages")) {
                auto st = parse_stage(s.get<std::string>());
                if (!st) fail(ErrorCode::ConfigError, "unknown stage " + s.dump());
                c.stages.push_back(*st);
            }
        }
        if (j.contains("checks"))
            for (const auto& r : j.at("checks")) {
                auto req = parse_requirement(r.get<std::string>());
                if (!req) fail(ErrorCode::ConfigError, "unknown check " + r.dump());
                c.checks.insert(*req);
            }
        if (j.contains("adversary_script") && j.contains("adversary"))
            fail(ErrorCode::ConfigError, "give either adversary_script or adversary, not both");
        if (j.contains("adversary_script")) {
            std::filesystem::path p = j.at("adversary_script").get<std::string>();
            if (p.is_relative()) p = base_dir / p;
            c.world.script = parse_attack_script(read_file(p));
        } else if (j.contains("adversary")) {
            c.world.script = parse_inline_script(j.at("adversary"));
        }
        c.ttl_probe = j.value("ttl_probe", false);
    } catch (const json::exception& e) {
        fail(ErrorCode::ConfigError, std::string("config: ") + e.what());
    }
    return c;
}

ScenarioConfig ScenarioConfig::from_file(const std::filesystem::path& path) {
    return from_json(read_file(path), path.parent_path());
}

std::uint64_t probe_send_time(const ScenarioConfig& config, std::string_view step) {
    ScenarioConfig quiet = config;
    quiet.world.script.clear();
    quiet.ttl_probe = false;
    World w(quiet.world);
    for (auto v : quiet.versions) {
        run_cycle(w, v, quiet.stages);
        for (const auto& m : w.adversary().history())
            if (m.step == step && m.round.vin) return m.time;
    }
    fail(ErrorCode::ConfigError, "probe run never sent " + std::string(step));
}

World run_world(const ScenarioConfig& config) {
    WorldConfig wc = config.world;
    if (config.ttl_probe) {
        // The first vehicle round opens when the first preparation round
        // ends, which does not depend on the lifetime.
        ScenarioConfig quiet = config;
        quiet.world.script.clear();
        World probe(quiet.world);
        probe.stage_release(config.versions.front());
        std::uint64_t open = 0;
        if (std::find(config.stages.begin(), config.stages.end(), Stage::Preparation) != config.stages.end()) {
            run_round(probe, std::nullopt, stage_plan(Stage::Preparation));
            open = probe.now();
        }
        std::uint64_t send = probe_send_time(config, "D17.17");
        wc.round_ttl = send - open + wc.eta;
    }
    World w(wc);
    for (auto v : config.versions) run_cycle(w, v, config.stages);
    return w;
}

namespace {

std::string attack_log_jsonl(const Network& net) {
    std::string out;
    for (const auto& e : net.attack_log()) {
        json j{{"time", e.time},   {"action", e.action}, {"channel", e.channel}, {"direction", e.direction},
               {"round_nonce", e.round_nonce}, {"seq", e.seq}, {"step", e.step}, {"detail", e.detail}};
        out += j.dump() + "\n";
    }
    return out;
}

}  // namespace

ScenarioResult verify_trace_text(std::string_view trace_jsonl, const std::set<Requirement>& checks) {
    ScenarioResult r;
    r.trace_jsonl = std::string(trace_jsonl);
    r.verdicts = verify_trace(Trace::from_jsonl(trace_jsonl), checks);
    r.report_jsonl = report_jsonl(r.verdicts);
    r.exit_code = all_pass(r.verdicts) ? 0 : 1;
    return r;
}

ScenarioResult run_scenario(const ScenarioConfig& config) {
    World w = run_world(config);
    // Verdicts come from the serialized trace, so re-verifying the file
    // reproduces them exactly.
    ScenarioResult r = verify_trace_text(w.trace().to_jsonl(), config.checks);
    for (const auto& line : w.adversary().knowledge().dump(w.crypto())) r.knowledge_dump += line + "\n";
    r.attack_log_jsonl = attack_log_jsonl(w.network());
    r.task_deliveries = w.task_deliveries();
    r.duplicates = w.duplicates();
    return r;
}

void write_artifacts(const ScenarioResult& result, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_file(out_dir / "trace.jsonl", result.trace_jsonl);
    write_file(out_dir / "report.jsonl", result.report_jsonl);
    if (!result.knowledge_dump.empty()) write_file(out_dir / "knowledge.txt", result.knowledge_dump);
    if (!result.attack_log_jsonl.empty() || !result.knowledge_dump.empty())
        write_file(out_dir / "attack_log.jsonl", result.attack_log_jsonl);
}

// ---------------------------------------------------------------- bundled scenarios

namespace {

struct Bundled {
    const char* name;
    const char* json;
};

const Bundled kBundled[] = {
    {"honest-e2e", R"({
  "name": "honest-e2e",
  "seed": 42,
  "backend": "sodium",
  "eta": 8,
  "round_ttl": 1000,
  "vehicles": [{"vin": "V1", "initial_ecu_version": 1}],
  "supplier_versions": {"ecu-fw": [2, 3]}
})"},
    {"tamper-ecu-link", R"({
  "name": "tamper-ecu-link",
  "seed": 43,
  "backend": "sodium",
  "eta": 8,
  "round_ttl": 1000,
  "vehicles": [{"vin": "V1", "initial_ecu_version": 1}],
  "supplier_versions": {"ecu-fw": [2, 3]},
  "adversary": [
    {"action": "modify", "channel": "CIA->ECU", "match": {"step": "D17.17", "round": 1}, "arg": {"flip": 20}}
  ]
})"},
    {"replay-ecu-link", R"({
  "name": "replay-ecu-link",
  "seed": 44,
  "backend": "sodium",
  "eta": 8,
  "round_ttl": 1000,
  "vehicles": [{"vin": "V1", "initial_ecu_version": 1}],
  "supplier_versions": {"ecu-fw": [2, 3]},
  "adversary": [
    {"action": "replay", "channel": "CIA->ECU", "repeat": true, "arg": {"count": 2}},
    {"action": "replay", "channel": "ECU->CIA", "repeat": true, "arg": {"count": 2}}
  ]
})"},
    {"drop-step17", R"({
  "name": "drop-step17",
  "seed": 45,
  "backend": "sodium",
  "eta": 8,
  "round_ttl": 1000,
  "vehicles": [{"vin": "V1", "initial_ecu_version": 1}],
  "supplier_versions": {"ecu-fw": [2, 3]},
  "adversary": [
    {"action": "drop", "channel": "CIA->ECU", "match": {"step": "D17.17", "round": 1}}
  ]
})"},
    {"delay-step17", R"({
  "name": "delay-step17",
  "seed": 46,
  "backend": "sodium",
  "eta": 8,
  "vehicles": [{"vin": "V1", "initial_ecu_version": 1}],
  "supplier_versions": {"ecu-fw": [2]},
  "ttl_probe": true,
  "adversary": [
    {"action": "delay", "channel": "CIA->ECU", "match": {"step": "D17.17", "round": 1}, "arg": {"by": 8}}
  ]
})"},
};

}  // namespace

std::vector<std::string> bundled_scenarios() {
    std::vector<std::string> out;
    for (const auto& b : kBundled) out.emplace_back(b.name);
    return out;
}

std::string bundled_scenario_json(std::string_view name) {
    for (const auto& b : kBundled)
        if (name == b.name) return b.json;
    fail(ErrorCode::ConfigError, "no bundled scenario named '" + std::string(name) + "'");
}

ScenarioConfig bundled_scenario(std::string_view name) { return ScenarioConfig::from_json(bundled_scenario_json(name)); }

}  // namespace unisuf
