#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "unisuf/enumeration.hpp"
#include "unisuf/error.hpp"
#include "unisuf/scenario.hpp"

namespace py = pybind11;
using namespace unisuf;

namespace {

py::list verdict_list(const std::vector<Verdict>& vs) {
    py::list out;
    for (const auto& v : vs) {
        py::dict d;
        d["requirement"] = requirement_name(v.requirement);
        d["sub_problem"] = v.sub_problem;
        d["status"] = v.pass() ? "Pass" : "Fail";
        d["witness"] = v.witness;
        d["detail"] = v.detail;
        out.append(d);
    }
    return out;
}

py::dict result_dict(const ScenarioResult& r) {
    py::dict d;
    d["trace_jsonl"] = r.trace_jsonl;
    d["report_jsonl"] = r.report_jsonl;
    d["knowledge"] = r.knowledge_dump;
    d["attack_log_jsonl"] = r.attack_log_jsonl;
    d["verdicts"] = verdict_list(r.verdicts);
    d["task_deliveries"] = r.task_deliveries;
    d["duplicates"] = r.duplicates;
    d["exit_code"] = r.exit_code;
    return d;
}

std::set<Requirement> parse_checks(const std::vector<std::string>& names) {
    std::set<Requirement> out;
    for (const auto& n : names) {
        auto r = parse_requirement(n);
        if (!r) fail(ErrorCode::ConfigError, "unknown check " + n);
        out.insert(*r);
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_unisuf, m) {
    m.doc() = "Vehicle software-update protocol simulator and trace verifier";

    static py::exception<Error> error(m, "UnisufError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(error, (std::string(error_name(e.code())) + ": " + e.detail()).c_str());
        }
    });

    m.def("bundled_scenarios", &bundled_scenarios, "Names of the scenarios shipped with the library.");
    m.def("bundled_scenario_json", [](const std::string& name) { return bundled_scenario_json(name); },
          py::arg("name"));
    m.def(
        "run_scenario",
        [](const std::string& name_or_json, const std::string& base_dir) {
            // A leading brace means inline JSON; anything else is a bundled name.
            auto first = name_or_json.find_first_not_of(" \t\r\n");
            ScenarioConfig cfg = first != std::string::npos && name_or_json[first] == '{'
                                     ? ScenarioConfig::from_json(name_or_json, base_dir)
                                     : bundled_scenario(name_or_json);
            py::gil_scoped_release release;
            ScenarioResult r = run_scenario(cfg);
            py::gil_scoped_acquire acquire;
            return result_dict(r);
        },
        py::arg("scenario"), py::arg("base_dir") = "",
        "Run a bundled scenario by name or a JSON configuration string.");
    m.def(
        "verify_trace",
        [](const std::string& trace_jsonl, const std::vector<std::string>& checks) {
            return result_dict(verify_trace_text(trace_jsonl, parse_checks(checks)));
        },
        py::arg("trace_jsonl"), py::arg("checks") = std::vector<std::string>{},
        "Re-check a JSONL trace. An empty check list runs all six requirements.");
    m.def(
        "enumerate_stream_scripts",
        [](std::size_t max_actions, const std::string& backend, std::uint64_t seed) {
            EnumerationOptions o;
            o.max_actions = max_actions;
            o.backend = backend;
            o.seed = seed;
            EnumerationResult r;
            {
                py::gil_scoped_release release;
                r = enumerate_stream_scripts(o);
            }
            py::dict d;
            d["scripts"] = r.scripts;
            d["secrets_checked"] = r.secrets_checked;
            d["leaks"] = r.leaks;
            d["seconds"] = r.seconds;
            return d;
        },
        py::arg("max_actions") = 4, py::arg("backend") = "sodium", py::arg("seed") = 42);
}
