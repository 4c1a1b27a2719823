"""Python access to the update-protocol simulator and its trace verifier."""

import json

from ._unisuf import (
    UnisufError,
    bundled_scenario_json,
    bundled_scenarios,
    enumerate_stream_scripts,
    run_scenario,
    verify_trace,
)

__all__ = [
    "UnisufError",
    "bundled_scenario_json",
    "bundled_scenarios",
    "enumerate_stream_scripts",
    "run_scenario",
    "verify_trace",
    "parse_jsonl",
]


def parse_jsonl(text):
    """Split JSONL output (traces, reports) into a list of dicts."""
    return [json.loads(line) for line in text.splitlines() if line.strip()]
