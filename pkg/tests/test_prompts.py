from __future__ import annotations

import pytest
from helpers import MOOD_INQUIRY, _add_sensor, _feature, _model, adversarial_case

from mobisense.codec import decode_canonical
from mobisense.prompts import (
    FewShotExample,
    InvalidExampleError,
    build_prompt,
    load_examples,
    load_rules,
    render_example,
    repair_prompt,
)
from mobisense.strategy import Inquiry, Step
from mobisense.validator import validate_strategy

RULES = load_rules().text
EXAMPLES = load_examples()
INQUIRY = Inquiry(f"INPUT: {MOOD_INQUIRY}")


def test_section_order():
    _, text = build_prompt(RULES, EXAMPLES[:1], INQUIRY)
    prefix = text.index(RULES.strip()[:40])
    example = text.index("Inquiry:")
    user = text.index(f"INPUT: {MOOD_INQUIRY}")
    assert prefix < example < user
    assert "```strategy" in text


def test_zero_examples():
    _, text = build_prompt(RULES, [], INQUIRY)
    assert "Inquiry:" not in text
    assert text.rstrip().endswith(f"INPUT: {MOOD_INQUIRY}")


@pytest.mark.parametrize("k", [0, 1, 2])
def test_example_count(k):
    _, text = build_prompt(RULES, EXAMPLES[:k], INQUIRY)
    assert text.count("Inquiry:") == k


def test_length_monotone_in_examples():
    lengths = [len(build_prompt(RULES, EXAMPLES[:k], INQUIRY)[1]) for k in range(len(EXAMPLES) + 1)]
    assert lengths == sorted(lengths)


def test_inquiry_appears_once():
    _, text = build_prompt(RULES, EXAMPLES, INQUIRY)
    assert text.count(MOOD_INQUIRY) == 1


def test_render_example():
    text = render_example(EXAMPLES[0])
    assert "I wish to understand the mood instability" in text
    assert text.index("Inquiry:") < text.index("Reasoning:") < text.index("Mobile Sensing Strategy:")
    assert render_example(EXAMPLES[0]) == text


def test_shipped_examples_are_valid(kb):
    assert len(EXAMPLES) >= 2
    for example in EXAMPLES:
        strategy, _ = decode_canonical(example.strategy_block)
        assert strategy is not None
        assert validate_strategy(strategy, kb).accepted


def test_invalid_example_rejected():
    bad = FewShotExample("q", "r", "{not a strategy}")
    with pytest.raises(InvalidExampleError):
        build_prompt(RULES, [bad], INQUIRY)
    with pytest.raises(InvalidExampleError):
        FewShotExample("q", "  ", "{}")


def test_scope_instruction():
    _, text = build_prompt(RULES, [], INQUIRY, scope=Step.REPRESENT, context='{"objective": "x"}')
    assert "Step 2 (Represent)" in text
    assert '"behaviors"' in text
    assert text.index("Results of the previous steps") < text.index("INPUT:")


def test_empty_rules_rejected():
    with pytest.raises(ValueError):
        build_prompt("  ", [], INQUIRY)


def test_repair_names_sensor_and_lists_valid_ones(kb):
    prompt, _ = build_prompt(RULES, EXAMPLES, INQUIRY)
    report = validate_strategy(adversarial_case([_add_sensor("Heartbeat")]), kb)
    repaired = repair_prompt(prompt, "previous answer", report, kb)
    text = repaired.render()
    tail = text[len(prompt.render()):]
    assert "Heartbeat" in tail and "Accelerometer" in tail and "previous answer" in tail
    assert "corrected" in tail


def test_two_violations_two_bullets(kb):
    prompt, _ = build_prompt(RULES, [], INQUIRY)
    report = validate_strategy(adversarial_case([_model(name="Transformer"), _feature(3, time_span=None)]), kb)
    feedback = repair_prompt(prompt, "x", report, kb).repairs[-1].feedback
    assert len([line for line in feedback.splitlines() if line.startswith("- ")]) == 2


def test_repair_of_repair_keeps_inquiry(kb):
    prompt, _ = build_prompt(RULES, EXAMPLES, INQUIRY)
    report = validate_strategy(adversarial_case([_add_sensor("Heartbeat")]), kb)
    twice = repair_prompt(repair_prompt(prompt, "one", report, kb), "two", report, kb)
    assert f"INPUT: {MOOD_INQUIRY}" in twice.render()
    assert len(twice.repairs) == 2
    assert [m.role.value for m in twice.messages()] == ["user", "assistant", "user", "assistant", "user"]


def test_repair_needs_violations(kb):
    prompt, _ = build_prompt(RULES, [], INQUIRY)
    with pytest.raises(ValueError):
        repair_prompt(prompt, "x", validate_strategy(adversarial_case([]), kb), kb)
