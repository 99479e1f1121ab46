from __future__ import annotations

import pytest
from helpers import ADVERSARIAL, _add_sensor, _feature, _model, adversarial_case, shipped_strategy

from mobisense.codec import encode_canonical
from mobisense.knowledge_base import SensorCategory, sensors_by_category
from mobisense.validator import (
    ValidationReport,
    ViolationCode,
    guess_sensor_category,
    validate_strategy,
    violation_feedback_text,
)


def test_shipped_strategies_are_clean(kb):
    for name in ("mood_instability", "entertainment"):
        assert validate_strategy(shipped_strategy(name), kb).accepted


@pytest.mark.parametrize("name,mutations,expected", ADVERSARIAL, ids=[c[0] for c in ADVERSARIAL])
def test_adversarial_corpus(kb, name, mutations, expected):
    report = validate_strategy(adversarial_case(mutations), kb)
    assert {v.code.name for v in report} == expected


def test_heartbeat_subject(kb):
    report = validate_strategy(adversarial_case([_add_sensor("Heartbeat")]), kb)
    assert [(v.code, v.subject) for v in report] == [(ViolationCode.V1, "Heartbeat")]


def test_missing_span_names_feature(kb):
    report = validate_strategy(adversarial_case([_feature(3, time_span=None)]), kb)
    assert [v.code for v in report] == [ViolationCode.V2]
    assert report.violations[0].subject == "Count of texting per night"


def test_report_is_ordered_and_deterministic(kb):
    _, mutations, _ = ADVERSARIAL[-1]
    s = adversarial_case(mutations)
    first, second = validate_strategy(s, kb), validate_strategy(s, kb)
    assert first == second
    order = [int(v.code.name[1:]) for v in first]
    assert order == sorted(order)


def test_subjects_trace_into_encoding(kb):
    for _, mutations, _ in ADVERSARIAL:
        s = adversarial_case(mutations)
        text = encode_canonical(s)
        for v in validate_strategy(s, kb):
            assert v.subject in text, (v.code, v.subject)


def test_removing_violation_adds_nothing(kb):
    broken = validate_strategy(adversarial_case([_add_sensor("Heartbeat"), _model(name="Transformer")]), kb)
    fixed = validate_strategy(adversarial_case([_model(name="Transformer")]), kb)
    assert {(v.code, v.subject) for v in fixed} <= {(v.code, v.subject) for v in broken}


def test_report_round_trips_through_dict(kb):
    report = validate_strategy(adversarial_case(ADVERSARIAL[-1][1]), kb)
    assert ValidationReport.from_dict(report.to_dict()) == report


def test_feedback_lists_hardware_sensors(kb):
    report = validate_strategy(adversarial_case([_add_sensor("Heartbeat")]), kb)
    text = violation_feedback_text(report, kb)
    bullets = [line for line in text.splitlines() if line.startswith("- ")]
    assert len(bullets) == 1 and "Heartbeat" in bullets[0]
    hardware = sensors_by_category(kb, SensorCategory.HARDWARE)
    assert len(hardware) == 13
    assert all(s.name in text for s in hardware)
    assert violation_feedback_text(report, kb) == text


def test_feedback_orders_by_code(kb):
    report = validate_strategy(
        adversarial_case([_model(name="Transformer"), _feature(3, time_span=None)]), kb
    )
    bullets = [line for line in violation_feedback_text(report, kb).splitlines() if line.startswith("- ")]
    assert len(bullets) == 2
    assert "V2" in bullets[0] and "V5" in bullets[1]


@pytest.mark.parametrize(
    "name,category",
    [("Heartbeat", SensorCategory.HARDWARE), ("Acceleromter", SensorCategory.HARDWARE),
     ("WhatsApp chats", SensorCategory.SOFTWARE), ("Screen brightness", SensorCategory.CONTEXTUAL)],
)
def test_guess_sensor_category(kb, name, category):
    assert guess_sensor_category(name, kb) is category
