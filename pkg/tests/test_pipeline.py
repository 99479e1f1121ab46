from __future__ import annotations

import json

import pytest
from helpers import DATA, MOOD_INQUIRY, _add_sensor, adversarial_case, as_completion, shipped_strategy

from mobisense.codec import encode_canonical
from mobisense.llm import MockBackend, MockScript
from mobisense.pipeline import (
    Outcome,
    PipelineConfig,
    RunConflictError,
    StepMode,
    StepOrderError,
    StepState,
    generate_strategy,
    load_run,
    persist_run,
    run_step,
)
from mobisense.strategy import Inquiry, Step, strategy_digest
from mobisense.validator import ViolationCode, validate_strategy

INQUIRY = f"INPUT: {MOOD_INQUIRY}"


def clock():
    return "2026-01-01T00:00:00+00:00"


def scripted(name):
    return MockBackend(MockScript.load(DATA / "mock_scripts" / f"{name}.yaml"))


def turns(*completions):
    return MockBackend(MockScript.from_yaml(json.dumps([{"match": i + 1, "completion": c} for i, c in enumerate(completions)])))


def test_golden_run(kb):
    record = generate_strategy(Inquiry(INQUIRY), PipelineConfig.default(), kb, scripted("demo"), clock)
    assert record.outcome is Outcome.ACCEPTED
    assert len(record.attempts) == 1
    assert record.strategy.level.value == "Trait"
    assert record.strategy.inquiry.normalized_text == MOOD_INQUIRY
    assert record.attempts[0].report.accepted


def test_repair_scenario(kb):
    record = generate_strategy(INQUIRY, PipelineConfig.default(), kb, scripted("repair"), clock)
    assert record.outcome is Outcome.ACCEPTED
    assert len(record.attempts) == 2
    first = record.attempts[0].report
    assert [(v.code, v.subject) for v in first] == [(ViolationCode.V1, "Heartbeat")]
    assert "Heartbeat" in record.attempts[1].prompt


def test_repair_prompt_carries_feedback_verbatim(kb):
    from mobisense.validator import violation_feedback_text

    record = generate_strategy(INQUIRY, PipelineConfig.default(), kb, scripted("repair"), clock)
    feedback = violation_feedback_text(record.attempts[0].report, kb)
    assert feedback in record.attempts[1].prompt


def test_zero_repairs(kb):
    record = generate_strategy(INQUIRY, PipelineConfig.default(max_repairs=0), kb, scripted("repair"), clock)
    assert record.outcome is Outcome.REJECTED_AFTER_REPAIRS
    assert len(record.attempts) == 1
    assert record.strategy is None


@pytest.mark.parametrize("max_repairs", [0, 1, 2, 5])
def test_attempts_bounded(kb, max_repairs):
    bad = as_completion(adversarial_case([_add_sensor("Heartbeat")]))
    backend = turns(*([bad] * 10))
    record = generate_strategy(INQUIRY, PipelineConfig.default(max_repairs=max_repairs), kb, backend, clock)
    assert record.outcome is Outcome.REJECTED_AFTER_REPAIRS
    assert len(record.attempts) == 1 + max_repairs


def test_unparseable_completions(kb):
    backend = turns("no block", "```strategy\n{broken\n```", "still nothing")
    record = generate_strategy(INQUIRY, PipelineConfig.default(), kb, backend, clock)
    assert record.outcome is Outcome.REJECTED_AFTER_REPAIRS
    assert len(record.attempts) == 3
    assert record.attempts[-1].diagnostics


def test_backend_failure_preserves_attempts(kb):
    bad = as_completion(adversarial_case([_add_sensor("Heartbeat")]))
    backend = MockBackend(MockScript.from_yaml(json.dumps([{"match": 1, "completion": bad}, {"match": 2, "fail": True}])))
    record = generate_strategy(INQUIRY, PipelineConfig.default(), kb, backend, clock)
    assert record.outcome is Outcome.BACKEND_FAILURE
    assert len(record.attempts) == 2
    assert record.attempts[1].completion is None and record.attempts[1].error


def test_determinism(kb):
    def run():
        return generate_strategy(INQUIRY, PipelineConfig.default(), kb, scripted("repair"), clock)

    a, b = run(), run()
    assert encode_canonical(a.strategy) == encode_canonical(b.strategy)
    assert strategy_digest(a.strategy) == strategy_digest(b.strategy)
    assert len(a.attempts) == len(b.attempts)
    assert a.run_id == b.run_id


def test_per_step_mode(kb):
    config = PipelineConfig.default(step_mode=StepMode.PER_STEP)
    record = generate_strategy(INQUIRY, config, kb, scripted("per_step"), clock)
    assert record.outcome is Outcome.ACCEPTED
    assert [e.step for e in record.attempts[0].steps] == list(Step)
    assert [t.step for t in record.strategy.reasoning] == list(Step)


def test_run_step_contracts(kb):
    config = PipelineConfig.default()
    backend = scripted("per_step")
    state = StepState(Inquiry(INQUIRY))
    with pytest.raises(StepOrderError):
        run_step(Step.FEATURES, state, config, kb, backend)
    state = run_step(Step.EXTRACT, state, config, kb, backend)
    assert state.sections["objective"] == "mood instability during the night"
    assert state.sections["level"] == "Trait"
    with pytest.raises(StepOrderError):
        run_step(Step.FEATURES, state, config, kb, backend)
    for step in (Step.REPRESENT, Step.FEATURES, Step.DATA):
        state = run_step(step, state, config, kb, backend)
    sensors = set(state.sections["data_sources"]["sensors"])
    assert {"Accelerometer", "Gyroscope", "Time"} <= sensors
    assert "Results of the previous steps" in state.exchanges[-1].prompt
    state = run_step(Step.MODEL, state, config, kb, backend)
    assert {"model", "performance"} <= set(state.sections)
    with pytest.raises(StepOrderError):
        run_step(Step.MODEL, state, config, kb, backend)


def test_run_step_parse_failure_becomes_diagnostic(kb):
    state = run_step(Step.EXTRACT, StepState(Inquiry(INQUIRY)), PipelineConfig.default(), kb, turns("prose only"))
    assert [d.code for d in state.diagnostics] == ["missing-block"]


def test_persist_and_reload(kb, tmp_path):
    record = generate_strategy(INQUIRY, PipelineConfig.default(), kb, scripted("repair"), clock)
    store = tmp_path / "absent" / "runs"
    where = persist_run(record, store)
    assert where.is_file() and where.parent.name == record.run_id
    loaded = load_run(where)
    assert loaded == record
    assert load_run(where.parent) == record
    assert validate_strategy(loaded.strategy, kb).accepted
    with pytest.raises(RunConflictError):
        persist_run(record, store)
    assert not [p for p in where.parent.iterdir() if p.name.startswith(".")]


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig.default(max_repairs=6)
    with pytest.raises(ValueError):
        PipelineConfig.default(max_repairs=-1)
    with pytest.raises(ValueError):
        PipelineConfig(rules_text="")


def test_shipped_mock_scenarios_have_valid_decompositions(kb):
    from mobisense.behavior import validate_decomposition

    for name in ("demo", "repair", "per_step"):
        mode = StepMode.PER_STEP if name == "per_step" else StepMode.SINGLE_SHOT
        record = generate_strategy(INQUIRY, PipelineConfig.default(step_mode=mode), kb, scripted(name), clock)
        assert validate_decomposition(record.strategy.decomposition, kb) == []
    assert shipped_strategy().decomposition == record.strategy.decomposition
