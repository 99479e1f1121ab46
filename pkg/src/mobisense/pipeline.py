"""Five-step strategy generation with parse, validate, and bounded repair.

``generate_strategy`` runs either one prompt covering all five steps
(``StepMode.SINGLE_SHOT``) or five chained prompts (``StepMode.PER_STEP``).
Each attempt's output is parsed and validated; on problems the model is
re-prompted with the itemised feedback, at most ``max_repairs`` times.  The
whole exchange is kept in a :class:`RunRecord`.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Callable

from .codec import (
    ParseDiagnostic,
    ParseResult,
    Severity,
    decode_canonical,
    dump_canonical,
    extract_structured_block,
    parse_llm_completion,
    parse_strategy_text,
    strategy_to_dict,
)
from .knowledge_base import KnowledgeBase
from .llm import (
    DEFAULT_MAX_TOKENS,
    DEFAULT_MODEL,
    DEFAULT_TEMPERATURE,
    Backend,
    LlmError,
    LlmRequest,
)
from .prompts import (
    STEP_SECTIONS,
    FewShotExample,
    Prompt,
    build_prompt,
    feedback_text,
    load_examples,
    load_rules,
    repair_prompt,
)
from .strategy import STEP_ORDER, Inquiry, SensingStrategy, Step, StepTrace
from .validator import ValidationReport, validate_strategy

MAX_REPAIRS_LIMIT = 5
RECORD_FILE = "record.json"


class StepMode(str, Enum):
    SINGLE_SHOT = "single"
    PER_STEP = "per-step"


class Outcome(str, Enum):
    ACCEPTED = "Accepted"
    REJECTED_AFTER_REPAIRS = "RejectedAfterRepairs"
    BACKEND_FAILURE = "BackendFailure"


class StepOrderError(RuntimeError):
    pass


class RunConflictError(FileExistsError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    max_repairs: int = 2
    step_mode: StepMode = StepMode.SINGLE_SHOT
    model_name: str = DEFAULT_MODEL
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    examples: tuple[FewShotExample, ...] = ()
    rules_text: str = ""
    rules_version: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "step_mode", StepMode(self.step_mode))
        object.__setattr__(self, "examples", tuple(self.examples))
        if not 0 <= self.max_repairs <= MAX_REPAIRS_LIMIT:
            raise ValueError(f"max_repairs must be between 0 and {MAX_REPAIRS_LIMIT}")
        if not self.rules_text.strip():
            raise ValueError("rules_text must be non-empty")

    @classmethod
    def default(cls, **overrides: Any) -> PipelineConfig:
        """Config using the shipped rules text and worked examples."""
        rules = load_rules()
        settings: dict[str, Any] = {
            "examples": tuple(load_examples()),
            "rules_text": rules.text,
            "rules_version": rules.version,
        }
        settings.update(overrides)
        return cls(**settings)

    def snapshot(self) -> dict[str, Any]:
        return {
            "max_repairs": self.max_repairs,
            "step_mode": self.step_mode.value,
            "model_name": self.model_name,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "examples": len(self.examples),
            "examples_digest": hashlib.sha256(
                "\n".join(e.inquiry + e.reasoning + e.strategy_block for e in self.examples).encode()
            ).hexdigest()[:16],
            "rules_version": self.rules_version,
        }


@dataclass(frozen=True)
class StepExchange:
    step: Step
    prompt: str
    completion: str


@dataclass(frozen=True)
class Attempt:
    prompt: str
    completion: str | None
    diagnostics: tuple[ParseDiagnostic, ...] = ()
    report: ValidationReport | None = None
    steps: tuple[StepExchange, ...] = ()
    error: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "prompt": self.prompt,
            "completion": self.completion,
            "diagnostics": [d.to_dict() for d in self.diagnostics],
            "report": None if self.report is None else self.report.to_dict(),
            "steps": [
                {"step": s.step.value, "prompt": s.prompt, "completion": s.completion} for s in self.steps
            ],
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Attempt:
        return cls(
            prompt=data["prompt"],
            completion=data["completion"],
            diagnostics=tuple(ParseDiagnostic.from_dict(d) for d in data["diagnostics"]),
            report=None if data["report"] is None else ValidationReport.from_dict(data["report"]),
            steps=tuple(StepExchange(Step(s["step"]), s["prompt"], s["completion"]) for s in data["steps"]),
            error=data.get("error", ""),
        )


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    inquiry: Inquiry
    config: dict[str, Any]
    attempts: tuple[Attempt, ...]
    outcome: Outcome
    strategy: SensingStrategy | None
    started_at: str
    finished_at: str
    kb_version: str = ""

    @property
    def accepted(self) -> bool:
        return self.outcome is Outcome.ACCEPTED

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "inquiry": self.inquiry.raw_text,
            "config": self.config,
            "kb_version": self.kb_version,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "outcome": self.outcome.value,
            "strategy": None if self.strategy is None else strategy_to_dict(self.strategy),
            "attempts": [a.to_dict() for a in self.attempts],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RunRecord:
        strategy = None
        if data["strategy"] is not None:
            strategy, diagnostics = decode_canonical(dump_canonical(data["strategy"]))
            if strategy is None:
                raise ValueError("stored strategy does not decode: " + "; ".join(map(str, diagnostics)))
        return cls(
            run_id=data["run_id"],
            inquiry=Inquiry(data["inquiry"]),
            config=data["config"],
            attempts=tuple(Attempt.from_dict(a) for a in data["attempts"]),
            outcome=Outcome(data["outcome"]),
            strategy=strategy,
            started_at=data["started_at"],
            finished_at=data["finished_at"],
            kb_version=data.get("kb_version", ""),
        )


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def make_run_id(inquiry: Inquiry, config: PipelineConfig, timestamp: str) -> str:
    payload = json.dumps([inquiry.raw_text, config.snapshot(), timestamp], sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


# -- per-step state ------------------------------------------------------------


@dataclass(frozen=True)
class StepState:
    """Accumulated outputs of the steps run so far."""

    inquiry: Inquiry
    sections: dict[str, Any] = field(default_factory=dict)
    traces: tuple[StepTrace, ...] = ()
    exchanges: tuple[StepExchange, ...] = ()
    diagnostics: tuple[ParseDiagnostic, ...] = ()
    attempt_ref: str = "attempt-1"

    @property
    def completed(self) -> tuple[Step, ...]:
        return tuple(e.step for e in self.exchanges)

    def document(self) -> str:
        """Canonical text assembled from the sections gathered so far."""
        doc: dict[str, Any] = {"inquiry": self.inquiry.raw_text}
        for step in STEP_ORDER:
            for key in STEP_SECTIONS[step]:
                if key in self.sections:
                    doc[key] = self.sections[key]
        doc["reasoning"] = [
            {"step": t.step.value, "text": t.reasoning_text, "ref": t.raw_completion_ref} for t in self.traces
        ]
        return dump_canonical(doc)


def _prose_outside_block(completion: str) -> str:
    """Completion text with fenced blocks removed, for use as reasoning."""
    kept: list[str] = []
    fence: str | None = None
    for line in completion.splitlines():
        stripped = line.strip()
        if fence is None and stripped.startswith(("```", "~~~")):
            fence = stripped[:3]
            continue
        if fence is not None:
            if stripped.startswith(fence) and set(stripped) <= set(fence):
                fence = None
            continue
        kept.append(line)
    return "\n".join(kept).strip()


def _request(prompt: Prompt, config: PipelineConfig) -> LlmRequest:
    return LlmRequest(config.model_name, tuple(prompt.messages()), config.temperature, config.max_tokens)


def run_step(
    step: Step,
    state: StepState,
    config: PipelineConfig,
    kb: KnowledgeBase,
    backend: Backend,
) -> StepState:
    """Run one generation step and fold its output into ``state``.

    Steps must run in order; anything else raises :class:`StepOrderError`.
    A completion that cannot be parsed is recorded as diagnostics on the
    state, which the repair loop later feeds back to the model.
    """
    expected = STEP_ORDER[len(state.completed)] if len(state.completed) < len(STEP_ORDER) else None
    if step is not expected:
        done = ", ".join(s.value for s in state.completed) or "none"
        raise StepOrderError(f"cannot run step {step.value}; completed so far: {done}")

    context = ""
    if state.sections:
        context = dump_canonical({k: v for k, v in state.sections.items()})
    prompt, text = build_prompt(config.rules_text, config.examples, state.inquiry, step, context)
    completion = backend.complete(_request(prompt, config)).text

    diagnostics: list[ParseDiagnostic] = []
    sections = dict(state.sections)
    block, found = extract_structured_block(completion)
    diagnostics.extend(found)
    location = f"step {step.value}"
    if block is None:
        diagnostics.append(
            ParseDiagnostic(Severity.ERROR, "missing-block", location, "no fenced strategy block in the step output")
        )
    else:
        try:
            doc = json.loads(block)
        except (ValueError, RecursionError) as exc:
            doc = None
            diagnostics.append(ParseDiagnostic(Severity.ERROR, "malformed", location, str(exc)))
        if isinstance(doc, dict):
            for key in STEP_SECTIONS[step]:
                if key in doc:
                    sections[key] = doc[key]
                else:
                    diagnostics.append(
                        ParseDiagnostic(Severity.ERROR, "missing-section", key, f"step {step.value} did not return {key!r}")
                    )
        elif doc is not None:
            diagnostics.append(ParseDiagnostic(Severity.ERROR, "bad-type", location, "expected a JSON object"))

    ref = f"{state.attempt_ref}/{step.value.lower()}"
    trace = StepTrace(step, _prose_outside_block(completion), ref)
    return replace(
        state,
        sections=sections,
        traces=state.traces + (trace,),
        exchanges=state.exchanges + (StepExchange(step, text, completion),),
        diagnostics=state.diagnostics + tuple(diagnostics),
    )


# -- main loop -----------------------------------------------------------------


def _with_refs(strategy: SensingStrategy, inquiry: Inquiry, ref: str) -> SensingStrategy:
    traces = tuple(
        t if t.raw_completion_ref else replace(t, raw_completion_ref=ref) for t in strategy.reasoning
    )
    return replace(strategy, inquiry=inquiry, reasoning=traces)


def _evaluate(result: ParseResult, inquiry: Inquiry, kb: KnowledgeBase, ref: str):
    """Validate whatever could be decoded, even if name checks failed."""
    candidate = result.candidate
    if candidate is None:
        return None, None
    candidate = _with_refs(candidate, inquiry, ref)
    report = validate_strategy(candidate, kb)
    accepted = result.strategy is not None and report.accepted
    return (candidate if accepted else None), report


def _problems_text(result: ParseResult, report: ValidationReport | None, kb: KnowledgeBase) -> str:
    parts = []
    if report is not None and report.violations:
        parts.append(feedback_text(report, kb))
    errors = [d for d in result.diagnostics if d.severity is Severity.ERROR]
    if report is not None:
        # Unknown names already appear as V1/V3/V5 violations.
        errors = [d for d in errors if d.code not in ("unknown-sensor", "unknown-metric", "unknown-model")]
    if errors:
        parts.append(feedback_text(errors))
    return "\n".join(parts)


def generate_strategy(
    inquiry: Inquiry | str,
    config: PipelineConfig,
    kb: KnowledgeBase,
    backend: Backend,
    clock: Callable[[], str] = _utc_now,
) -> RunRecord:
    """Run the full generation procedure and return its record."""
    inquiry = inquiry if isinstance(inquiry, Inquiry) else Inquiry(inquiry)
    started = clock()
    attempts: list[Attempt] = []
    outcome = Outcome.REJECTED_AFTER_REPAIRS
    accepted: SensingStrategy | None = None

    prompt: Prompt | None = None
    for n in range(1, config.max_repairs + 2):
        ref = f"attempt-{n}"
        steps: tuple[StepExchange, ...] = ()
        state: StepState | None = None
        try:
            if prompt is None and config.step_mode is StepMode.PER_STEP:
                state = StepState(inquiry, attempt_ref=ref)
                for step in STEP_ORDER:
                    state = run_step(step, state, config, kb, backend)
                steps = state.exchanges
                completion = state.document()
                prompt_text = "\n\n".join(e.prompt for e in steps)
                result = parse_strategy_text(completion, kb, inquiry)
                result = replace(result, diagnostics=state.diagnostics + result.diagnostics)
                # Repairs continue from an all-steps prompt.
                prompt, _ = build_prompt(config.rules_text, config.examples, inquiry)
                completion_for_repair = f"```strategy\n{completion}```"
            else:
                if prompt is None:
                    prompt, _ = build_prompt(config.rules_text, config.examples, inquiry)
                prompt_text = prompt.render()
                completion = backend.complete(_request(prompt, config)).text
                completion_for_repair = completion
                result = parse_llm_completion(completion, kb, inquiry)
        except LlmError as exc:
            if state is not None:
                steps = state.exchanges
                prompt_text = "\n\n".join(e.prompt for e in steps)
            else:
                prompt_text = prompt.render() if prompt else ""
            attempts.append(Attempt(prompt_text, None, steps=steps, error=str(exc)))
            outcome = Outcome.BACKEND_FAILURE
            break

        strategy, report = _evaluate(result, inquiry, kb, ref)
        attempts.append(Attempt(prompt_text, completion, result.diagnostics, report, steps))
        if strategy is not None:
            accepted = strategy
            outcome = Outcome.ACCEPTED
            break
        if n <= config.max_repairs:
            prompt = repair_prompt(prompt, completion_for_repair, _problems_text(result, report, kb), kb)

    finished = clock()
    return RunRecord(
        run_id=make_run_id(inquiry, config, started),
        inquiry=inquiry,
        config=config.snapshot(),
        attempts=tuple(attempts),
        outcome=outcome,
        strategy=accepted,
        started_at=started,
        finished_at=finished,
        kb_version=kb.version,
    )


# -- run store -----------------------------------------------------------------


def record_to_json(record: RunRecord) -> str:
    return json.dumps(record.to_dict(), indent=2, ensure_ascii=False) + "\n"


def persist_run(record: RunRecord, store_path: str | os.PathLike[str]) -> Path:
    """Write ``record`` to ``<store>/<run_id>/record.json``.

    Refuses to overwrite an existing run with :class:`RunConflictError`.  The
    file appears atomically.
    """
    store = Path(store_path)
    store.mkdir(parents=True, exist_ok=True)
    run_dir = store / record.run_id
    try:
        run_dir.mkdir()
    except FileExistsError:
        raise RunConflictError(f"run {record.run_id} already exists in {store}") from None
    target = run_dir / RECORD_FILE
    fd, tmp = tempfile.mkstemp(dir=run_dir, prefix=".record-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(record_to_json(record))
        os.replace(tmp, target)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return target


def load_run(path: str | os.PathLike[str]) -> RunRecord:
    """Load a record from its file or its run directory."""
    path = Path(path)
    if path.is_dir():
        path = path / RECORD_FILE
    return RunRecord.from_dict(json.loads(path.read_text(encoding="utf-8")))
