// Command-line front end: runs scenarios, re-verifies traces and lists the
// bundled scenarios. Exit status 0 means every selected check passed, 1 means
// at least one failed and 2 means the input could not be used.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "unisuf/error.hpp"
#include "unisuf/scenario.hpp"

namespace {

void summarize(const unisuf::ScenarioResult& r) {
    std::size_t failed = 0;
    for (const auto& v : r.verdicts)
        if (!v.pass()) {
            ++failed;
            std::cerr << "FAIL " << unisuf::requirement_name(v.requirement) << " " << v.sub_problem << ": "
                      << v.witness << "\n";
        }
    std::cout << r.verdicts.size() - failed << "/" << r.verdicts.size() << " checks passed\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"UniSUF update protocol simulator and trace verifier"};
    app.require_subcommand(1);

    std::string config_path, scenario, out_dir = "out";
    auto* run = app.add_subcommand("run", "run a scenario and verify its trace");
    auto* src = run->add_option("--config", config_path, "scenario config (JSON)");
    run->add_option("--scenario", scenario, "bundled scenario name")->excludes(src);
    run->add_option("--out", out_dir, "artifact directory");

    std::string trace_path, verify_out = "out";
    auto* verify = app.add_subcommand("verify", "re-verify a trace file");
    verify->add_option("--trace", trace_path, "trace file")->required();
    verify->add_option("--out", verify_out, "report directory");

    auto* list = app.add_subcommand("list-scenarios", "print the bundled scenario names");
    std::string show;
    list->add_option("--show", show, "print one scenario's config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*run) {
            if (config_path.empty() && scenario.empty()) throw CLI::RequiredError("--config or --scenario");
            unisuf::ScenarioConfig cfg = config_path.empty() ? unisuf::bundled_scenario(scenario)
                                                             : unisuf::ScenarioConfig::from_file(config_path);
            auto result = unisuf::run_scenario(cfg);
            unisuf::write_artifacts(result, out_dir);
            summarize(result);
            return result.exit_code;
        }
        if (*verify) {
            std::ifstream in(trace_path, std::ios::binary);
            if (!in) throw unisuf::Error(unisuf::ErrorCode::MalformedTrace, "cannot read " + trace_path);
            std::ostringstream ss;
            ss << in.rdbuf();
            auto result = unisuf::verify_trace_text(ss.str());
            std::filesystem::create_directories(verify_out);
            std::ofstream(std::filesystem::path(verify_out) / "report.jsonl", std::ios::binary) << result.report_jsonl;
            summarize(result);
            return result.exit_code;
        }
        if (*list) {
            if (!show.empty()) {
                std::cout << unisuf::bundled_scenario_json(show) << "\n";
                return 0;
            }
            for (const auto& n : unisuf::bundled_scenarios()) std::cout << n << "\n";
            return 0;
        }
    } catch (const unisuf::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
