"""Value types for a generated mobile sensing strategy."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from enum import Enum

from .behavior import BehaviorDecomposition, BehaviorLevel, BehaviorNode
from .knowledge_base import KnowledgeBase, MetricCategory, TaskKind, TimeSpanKind, lookup_sensor

_INPUT_PREFIX = re.compile(r"^\s*INPUT\s*:\s*", re.IGNORECASE)

TIME_SENSOR = "Time"


@dataclass(frozen=True)
class Inquiry:
    """A research question as typed by the user.

    A leading ``INPUT:`` marker is accepted and removed.
    """

    raw_text: str
    normalized_text: str = field(init=False)

    def __post_init__(self) -> None:
        normalized = _INPUT_PREFIX.sub("", self.raw_text.strip(), count=1).strip()
        if not normalized:
            raise ValueError("inquiry is empty")
        object.__setattr__(self, "normalized_text", normalized)


class Step(str, Enum):
    """The five generation steps, in execution order."""

    EXTRACT = "Extract"
    REPRESENT = "Represent"
    FEATURES = "Features"
    DATA = "Data"
    MODEL = "Model"


STEP_ORDER: tuple[Step, ...] = tuple(Step)


class PerformanceTier(str, Enum):
    LOW = "Low"
    MODERATE = "Moderate"
    HIGH = "High"


@dataclass(frozen=True)
class MetricRef:
    category: MetricCategory
    name: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "category", MetricCategory(self.category))


@dataclass(frozen=True)
class TimeSpan:
    kind: TimeSpanKind
    expression: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", TimeSpanKind(self.kind))


@dataclass(frozen=True)
class FeatureSpec:
    """Metric x time span x behaviour.

    ``metric`` or ``time_span`` may be ``None`` in an incomplete feature; the
    validator reports that rather than the constructor.
    """

    metric: MetricRef | None
    time_span: TimeSpan | None
    behavior: str
    display_name: str = ""


@dataclass(frozen=True)
class DataSourceSelection:
    sensors: frozenset[str]
    justification: dict[str, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "sensors", frozenset(self.sensors))
        object.__setattr__(
            self, "justification", {k: frozenset(v) for k, v in self.justification.items()}
        )


@dataclass(frozen=True)
class ModelSuggestion:
    model: str
    task_kind: TaskKind
    rationale: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "task_kind", TaskKind(self.task_kind))


@dataclass(frozen=True)
class PerformanceEstimate:
    tier: PerformanceTier
    rationale: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "tier", PerformanceTier(self.tier))
        if not self.rationale.strip():
            raise ValueError("performance estimate needs a rationale")


@dataclass(frozen=True)
class StepTrace:
    step: Step
    reasoning_text: str
    raw_completion_ref: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "step", Step(self.step))


@dataclass(frozen=True)
class SensingStrategy:
    inquiry: Inquiry
    objective: str
    level: BehaviorLevel
    decomposition: BehaviorDecomposition
    features: tuple[FeatureSpec, ...]
    data_sources: DataSourceSelection
    model: ModelSuggestion
    performance: PerformanceEstimate
    reasoning: tuple[StepTrace, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "level", BehaviorLevel(self.level))
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "reasoning", tuple(self.reasoning))
        if not self.features:
            raise ValueError("a strategy needs at least one feature")
        steps = [t.step for t in self.reasoning]
        if len(steps) != len(set(steps)):
            raise ValueError("each reasoning step may appear at most once")


class IncomputableFeatureError(ValueError):
    """The feature's behaviour cannot be tied to any sensor."""


def _metric_phrase(name: str) -> str:
    return name[:1].upper() + name[1:] if name[:1].islower() else name


def feature_display_name(
    feature: FeatureSpec, decomposition: BehaviorDecomposition | None = None
) -> str:
    """Render ``"<Metric> of <behaviour> <time span>"``.

    The behaviour label comes from ``decomposition`` when the node is found,
    otherwise the raw behaviour id is used.  The duration of a one-word state
    reads as "<state> time" ("Duration of screen time per weeknight").
    """
    node = decomposition.get(feature.behavior) if decomposition is not None else None
    label = node.label.strip() if node is not None else feature.behavior.strip()
    metric = feature.metric.name.strip() if feature.metric is not None else "Value"
    if metric.casefold() == "duration" and len(label.split()) == 1 and label.casefold() != "time":
        label = f"{label} time"
    parts = [_metric_phrase(metric), "of", label]
    if feature.time_span is not None and feature.time_span.expression.strip():
        parts.append(" ".join(feature.time_span.expression.split()))
    return " ".join(parts)


def anchor_nodes(node: BehaviorNode, decomposition: BehaviorDecomposition) -> list[BehaviorNode]:
    """Context nodes whose sensors a feature on ``node`` draws from."""
    if node.level is BehaviorLevel.CONTEXT:
        return [node]
    found = (decomposition.get(i) for i in decomposition.descendants(node.id))
    return [n for n in found if n is not None and n.level is BehaviorLevel.CONTEXT]


def required_sensors(
    feature: FeatureSpec, decomposition: BehaviorDecomposition, kb: KnowledgeBase
) -> frozenset[str]:
    """Sensors needed to compute ``feature``.

    Context behaviours contribute their sensor hints; coarser behaviours
    contribute the hints of the context behaviours below them.  Any time span
    implies the Time source.  Unknown hint names are skipped here and left to
    the validator.
    """
    node = decomposition.get(feature.behavior)
    if node is None:
        raise IncomputableFeatureError(f"behavior {feature.behavior!r} is not in the decomposition")
    hints = [h for n in anchor_nodes(node, decomposition) for h in n.sensor_hints]
    if not hints:
        raise IncomputableFeatureError(
            f"behavior {node.label!r} has no sensor hints, so the feature cannot be computed"
        )
    names = set()
    for hint in hints:
        spec = lookup_sensor(kb, hint)
        if spec:
            names.add(spec.name)
    if feature.time_span is not None:
        names.add(TIME_SENSOR)
    return frozenset(names)


def strategy_digest(strategy: SensingStrategy) -> str:
    """SHA-256 hex digest of the canonical encoding."""
    from .codec import encode_canonical

    return hashlib.sha256(encode_canonical(strategy).encode("utf-8")).hexdigest()
