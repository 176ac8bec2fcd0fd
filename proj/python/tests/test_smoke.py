import json
import os
from pathlib import Path

import pytest

import agentrec

SCENARIOS = Path(os.environ.get("AGENTREC_SOURCE_DIR", Path(__file__).resolve().parents[2])) / "scenarios"


def test_version():
    assert agentrec.__version__ == "0.1.0"


def test_memory_retrieval_and_context():
    store = agentrec.MemoryStore()
    store.upsert_fact("guest_allergy", "gluten", agentrec.MemoryLabel.EPI, 1)
    store.upsert_text("the party theme is mickey", agentrec.MemoryLabel.SEM, 2)
    assert len(store) == 2
    top = agentrec.retrieve_topk(store, "guest_allergy: gluten", 1)
    assert top == [("guest_allergy: gluten", pytest.approx(1.0))]
    window = agentrec.regulate_context(store, "gluten", 2)
    assert window["total_tokens"] <= 2
    assert not window["approximate"]


def test_propagation_closed_form():
    assert agentrec.propagation_probability([0.1, 0.1]) == pytest.approx(0.19)


def test_constrained_select_and_errors():
    policy = json.dumps({"banned_terms": ["guaranteed"]})
    pick = agentrec.constrained_select([("guaranteed fun", 0.9), ("warm fun", 0.5)], policy)
    assert pick == "warm fun"
    with pytest.raises(agentrec.AgentRecError) as info:
        agentrec.constrained_select([("guaranteed fun", 0.9)], policy)
    assert info.value.args[0] == "NoCompliantCandidate"


def test_scenarios_validate_and_run(tmp_path):
    assert agentrec.validate_config(SCENARIOS / "party_planner.json") == []
    a = agentrec.run_scenario(SCENARIOS / "cascade.json", out=tmp_path / "a", format="jsonlines")
    b = agentrec.run_scenario(SCENARIOS / "cascade.json", out=tmp_path / "b", format="jsonlines")
    assert a["exit_code"] == 0 and a["error"] is None
    assert (tmp_path / "a" / "trace.jsonl").read_bytes() == (tmp_path / "b" / "trace.jsonl").read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["artifacts"]["report.jsonl"] == agentrec.sha256_hex((tmp_path / "a" / "report.jsonl").read_text())
