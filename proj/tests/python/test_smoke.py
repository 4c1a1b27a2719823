import pytest

import unisuf


def test_bundled_names():
    names = unisuf.bundled_scenarios()
    assert "honest-e2e" in names
    assert len(names) == 5


def test_honest_run_passes_every_check():
    r = unisuf.run_scenario("honest-e2e")
    assert r["exit_code"] == 0
    assert len(r["verdicts"]) == 84
    assert all(v["status"] == "Pass" for v in r["verdicts"])
    header = unisuf.parse_jsonl(r["trace_jsonl"])[0]
    assert header["type"] == "header"
    assert header["seed"] == 42


def test_reverify_matches_original_report():
    r = unisuf.run_scenario("tamper-ecu-link")
    again = unisuf.verify_trace(r["trace_jsonl"])
    assert again["report_jsonl"] == r["report_jsonl"]
    only_r4 = unisuf.verify_trace(r["trace_jsonl"], ["R4"])
    assert {v["requirement"] for v in only_r4["verdicts"]} == {"R4"}


def test_inline_config_and_failure_exit():
    cfg = """{"seed": 7, "vehicles": [{"vin": "V1", "initial_ecu_version": 1},
             {"vin": "V2", "initial_ecu_version": 1}], "supplier_versions": {"ecu-fw": [2]}}"""
    r = unisuf.run_scenario(cfg)
    assert r["exit_code"] == 1
    failing = [v for v in r["verdicts"] if v["status"] == "Fail"]
    assert [(v["requirement"], v["witness"]) for v in failing] == [("R1", "Software")]


def test_errors_carry_their_category():
    with pytest.raises(unisuf.UnisufError, match="ConfigError"):
        unisuf.run_scenario('{"seed": 1}')
    with pytest.raises(unisuf.UnisufError, match="MalformedTrace"):
        unisuf.verify_trace("not a trace\n")


def test_small_enumeration_finds_no_leak():
    r = unisuf.enumerate_stream_scripts(max_actions=1, backend="mock")
    assert r["scripts"] > 0
    assert r["leaks"] == []
