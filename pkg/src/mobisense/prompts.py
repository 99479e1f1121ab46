"""Prompt assembly: design rules, worked examples, and the user's question.

A rendered prompt reads, top to bottom: the rules prefix, the output format
instruction, each worked example (Inquiry / Reasoning / Mobile Sensing
Strategy), an optional single-step instruction and prior-step context, and
finally the ``INPUT:`` line.  Repair prompts append the model's previous answer
and an itemised list of problems.
"""

from __future__ import annotations

import os
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import yaml

from .codec import BLOCK_TAG, ParseDiagnostic, decode_canonical, fenced
from .knowledge_base import KnowledgeBase
from .llm import Message, Role
from .strategy import STEP_ORDER, Inquiry, Step
from .validator import ValidationReport, violation_feedback_text


class InvalidExampleError(ValueError):
    pass


@dataclass(frozen=True)
class FewShotExample:
    inquiry: str
    reasoning: str
    strategy_block: str

    def __post_init__(self) -> None:
        for part in ("inquiry", "reasoning", "strategy_block"):
            if not getattr(self, part).strip():
                raise InvalidExampleError(f"few-shot example has an empty {part}")


@dataclass(frozen=True)
class RulesText:
    version: str
    text: str


# Sections each step fills in when prompted one step at a time.
STEP_SECTIONS: dict[Step, tuple[str, ...]] = {
    Step.EXTRACT: ("objective", "level"),
    Step.REPRESENT: ("behaviors",),
    Step.FEATURES: ("features",),
    Step.DATA: ("data_sources",),
    Step.MODEL: ("model", "performance"),
}

FORMAT_INSTRUCTION = f"""\
Output format: after your step-by-step reasoning, give the strategy as JSON in a
single fenced block that starts with ```{BLOCK_TAG} and ends with ```.  Use these
top-level fields: "objective" (string), "level" (Trait, Category, Activity or
Context), "behaviors" ({{"root": id, "nodes": [{{"id", "label", "level",
"sensor_hints": [sensor names, Context nodes only]}}], "edges": [[parent id,
child id], ...]}}), "features" ([{{"display_name", "metric": {{"category",
"name"}}, "time_span": {{"kind": Duration or Periodicity, "expression"}},
"behavior": node id}}]), "data_sources" ({{"sensors": [names], "justification":
{{feature display_name: [sensor names]}}}}), "model" ({{"name", "task_kind":
Regression or Classification, "rationale"}}), "performance" ({{"tier": Low,
Moderate or High, "rationale"}}) and "reasoning" ([{{"step": Extract, Represent,
Features, Data or Model, "text"}}])."""

REPAIR_INSTRUCTION = (
    f"Fix every problem listed above.  Reply with only the corrected ```{BLOCK_TAG} block."
)


def render_example(example: FewShotExample, index: int | None = None) -> str:
    heading = f"### Example {index}\n\n" if index is not None else ""
    return (
        f"{heading}Inquiry: {example.inquiry.strip()}\n\n"
        f"Reasoning:\n{example.reasoning.strip()}\n\n"
        f"Mobile Sensing Strategy:\n{fenced(example.strategy_block)}"
    )


@dataclass(frozen=True)
class RepairTurn:
    completion: str
    feedback: str


@dataclass(frozen=True)
class Prompt:
    prefix: str
    examples: tuple[FewShotExample, ...]
    user_input: str
    scope: Step | None = None
    context: str = ""
    repairs: tuple[RepairTurn, ...] = field(default_factory=tuple)

    def initial_text(self) -> str:
        parts = [self.prefix.strip(), FORMAT_INSTRUCTION]
        if self.examples:
            parts.append("## Examples")
            parts.extend(render_example(e, i) for i, e in enumerate(self.examples, 1))
        if self.scope is not None:
            n = STEP_ORDER.index(self.scope) + 1
            fields = ", ".join(f'"{s}"' for s in STEP_SECTIONS[self.scope])
            parts.append(
                f"For this request perform only Step {n} ({self.scope.value}).  Explain your "
                f"reasoning, then give a ```{BLOCK_TAG} block containing only the fields {fields}."
            )
        if self.context:
            parts.append(f"Results of the previous steps:\n{fenced(self.context)}")
        parts.append(f"INPUT: {self.user_input}")
        return "\n\n".join(parts) + "\n"

    def render(self) -> str:
        """The whole conversation as one text, repairs included."""
        text = self.initial_text()
        for turn in self.repairs:
            text += (
                f"\n## Your previous answer\n\n{turn.completion.rstrip()}\n\n"
                f"## Problems found\n\n{turn.feedback}\n\n{REPAIR_INSTRUCTION}\n"
            )
        return text

    def messages(self) -> list[Message]:
        msgs = [Message(Role.USER, self.initial_text())]
        for turn in self.repairs:
            msgs.append(Message(Role.ASSISTANT, turn.completion))
            msgs.append(Message(Role.USER, f"Problems found:\n{turn.feedback}\n\n{REPAIR_INSTRUCTION}"))
        return msgs


def build_prompt(
    rules_text: str,
    examples: Sequence[FewShotExample],
    inquiry: Inquiry,
    scope: Step | None = None,
    context: str = "",
) -> tuple[Prompt, str]:
    """Assemble a prompt and its rendered text.

    ``scope`` restricts the request to one step; ``None`` asks for all five.
    Raises :class:`InvalidExampleError` if an example's strategy block does
    not decode.
    """
    if not rules_text.strip():
        raise ValueError("rules text must be non-empty")
    for i, example in enumerate(examples):
        strategy, diagnostics = decode_canonical(example.strategy_block)
        if strategy is None:
            problems = "; ".join(str(d) for d in diagnostics)
            raise InvalidExampleError(f"example {i + 1} strategy does not decode: {problems}")
    prompt = Prompt(rules_text, tuple(examples), inquiry.normalized_text, scope, context)
    return prompt, prompt.render()


def feedback_text(
    problems: ValidationReport | Sequence[ParseDiagnostic] | str, kb: KnowledgeBase | None = None
) -> str:
    if isinstance(problems, str):
        return problems
    if isinstance(problems, ValidationReport):
        if kb is None:
            from .knowledge_base import default_knowledge_base

            kb = default_knowledge_base()
        return violation_feedback_text(problems, kb)
    return "\n".join(f"- [{d.code}] {d.location or '<root>'}: {d.message}" for d in problems)


def repair_prompt(
    previous: Prompt,
    raw_completion: str,
    violations: ValidationReport | Sequence[ParseDiagnostic] | str,
    kb: KnowledgeBase | None = None,
) -> Prompt:
    """Extend ``previous`` with the model's answer and the problems found in it.

    ``violations`` is a validation report, a list of parse diagnostics, or
    feedback text that is already formatted.
    """
    text = feedback_text(violations, kb)
    if not text.strip():
        raise ValueError("repair_prompt needs at least one violation")
    return replace(previous, repairs=previous.repairs + (RepairTurn(raw_completion, text),))


# -- data files ----------------------------------------------------------------


def _data_dir() -> Path:
    return Path(str(resources.files("mobisense").joinpath("data")))


def load_rules(path: str | os.PathLike[str] | None = None) -> RulesText:
    path = Path(path) if path is not None else _data_dir() / "rules.yaml"
    doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    if not isinstance(doc, dict) or not str(doc.get("text", "")).strip():
        raise ValueError(f"{path}: expected a mapping with a non-empty 'text' field")
    return RulesText(version=str(doc.get("version", "")), text=str(doc["text"]))


def load_example(path: str | os.PathLike[str]) -> FewShotExample:
    doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise InvalidExampleError(f"{path}: expected a mapping")
    missing = [k for k in ("inquiry", "reasoning", "strategy") if not doc.get(k)]
    if missing:
        raise InvalidExampleError(f"{path}: missing {', '.join(missing)}")
    example = FewShotExample(str(doc["inquiry"]), str(doc["reasoning"]), str(doc["strategy"]))
    strategy, diagnostics = decode_canonical(example.strategy_block)
    if strategy is None:
        raise InvalidExampleError(f"{path}: " + "; ".join(str(d) for d in diagnostics))
    return example


def load_examples(directory: str | os.PathLike[str] | None = None) -> list[FewShotExample]:
    """Load every ``*.yaml`` example in ``directory``, sorted by file name."""
    directory = Path(directory) if directory is not None else _data_dir() / "examples"
    return [load_example(p) for p in sorted(directory.glob("*.yaml"))]
