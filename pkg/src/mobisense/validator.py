"""Rule checks run on every parsed strategy.

Rules, evaluated in this order and never short-circuited:

    V1 unknown-sensor        a sensor name is not in the knowledge base
    V2 incomplete-feature    a feature lacks its metric, time span, or behaviour
    V3 unknown-metric        the metric is not in the knowledge base under that category
    V4 malformed-timespan    the time span matches no pattern of its kind
    V5 unknown-model         the model is unknown or does not support the task kind
    V6 level-inversion       the behaviour hierarchy breaks the level order
    V7 unanchored-feature    a feature's behaviour is missing or tied to no sensor
    V8 uncovered-feature     the selected data sources do not cover a feature
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .behavior import DecompositionError, validate_decomposition
from .fuzzy import normalize_name
from .knowledge_base import (
    KnowledgeBase,
    SensorCategory,
    lookup_metric,
    lookup_model,
    lookup_sensor,
    match_time_span,
    sensors_by_category,
)
from .strategy import (
    TIME_SENSOR,
    IncomputableFeatureError,
    SensingStrategy,
    required_sensors,
)


class ViolationCode(str, Enum):
    V1 = "V1-unknown-sensor"
    V2 = "V2-incomplete-feature"
    V3 = "V3-unknown-metric"
    V4 = "V4-malformed-timespan"
    V5 = "V5-unknown-model"
    V6 = "V6-level-inversion"
    V7 = "V7-unanchored-feature"
    V8 = "V8-uncovered-feature"


_CODE_ORDER = {code: i for i, code in enumerate(ViolationCode)}


@dataclass(frozen=True)
class Violation:
    code: ViolationCode
    subject: str
    detail: str

    def to_dict(self) -> dict[str, str]:
        return {"code": self.code.value, "subject": self.subject, "detail": self.detail}

    @classmethod
    def from_dict(cls, data: dict[str, str]) -> Violation:
        return cls(ViolationCode(data["code"]), data["subject"], data["detail"])


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def accepted(self) -> bool:
        return not self.violations

    def codes(self) -> set[ViolationCode]:
        return {v.code for v in self.violations}

    def __len__(self) -> int:
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    def to_dict(self) -> list[dict[str, str]]:
        return [v.to_dict() for v in self.violations]

    @classmethod
    def from_dict(cls, data: list[dict[str, Any]]) -> ValidationReport:
        return cls(tuple(Violation.from_dict(v) for v in data))


def _feature_subject(strategy: SensingStrategy, index: int) -> str:
    f = strategy.features[index]
    return f.display_name or f.behavior or f"features[{index}]"


def validate_strategy(strategy: SensingStrategy, kb: KnowledgeBase) -> ValidationReport:
    """Run all eight rules and return every violation found."""
    found: list[Violation] = []
    seen: set[tuple[ViolationCode, str]] = set()

    def add(code: ViolationCode, subject: str, detail: str) -> None:
        if (code, subject) not in seen:
            seen.add((code, subject))
            found.append(Violation(code, subject, detail))

    decomp = strategy.decomposition
    sources = strategy.data_sources

    # V1: every sensor name anywhere in the strategy must resolve.
    sensor_mentions = [(h, f"hinted by behavior {n.id!r}") for n in decomp.nodes for h in n.sensor_hints]
    sensor_mentions += [(s, "listed in data sources") for s in sorted(sources.sensors)]
    sensor_mentions += [
        (s, f"justifies feature {k!r}") for k, vs in sorted(sources.justification.items()) for s in sorted(vs)
    ]
    for name, where in sensor_mentions:
        if not lookup_sensor(kb, name):
            add(ViolationCode.V1, name, f"unknown sensor {name!r} ({where})")

    # V2: three-component rule.
    for i, f in enumerate(strategy.features):
        missing = [
            part
            for part, present in (
                ("metric", f.metric is not None and f.metric.name.strip()),
                ("time span", f.time_span is not None and f.time_span.expression.strip()),
                ("behavior", f.behavior.strip()),
            )
            if not present
        ]
        if missing:
            add(
                ViolationCode.V2,
                _feature_subject(strategy, i),
                f"feature is missing its {', '.join(missing)}",
            )

    # V3
    for f in strategy.features:
        if f.metric is None or not f.metric.name.strip():
            continue
        if not lookup_metric(kb, f.metric.name, f.metric.category):
            elsewhere = lookup_metric(kb, f.metric.name)
            if elsewhere:
                detail = (
                    f"metric {f.metric.name!r} belongs to category {elsewhere.category.value}, "
                    f"not {f.metric.category.value}"
                )
            else:
                detail = f"unknown metric {f.metric.name!r}"
            add(ViolationCode.V3, f.metric.name, detail)

    # V4
    for f in strategy.features:
        span = f.time_span
        if span is None or not span.expression.strip():
            continue
        if match_time_span(kb, span.kind, span.expression) is None:
            forms = [t.pattern for t in kb.time_span_forms if t.kind is span.kind]
            add(
                ViolationCode.V4,
                span.expression,
                f"{span.kind.value} time span {span.expression!r} matches none of: {'; '.join(forms)}",
            )

    # V5
    model = lookup_model(kb, strategy.model.model)
    if not model:
        add(ViolationCode.V5, strategy.model.model, f"unknown model {strategy.model.model!r}")
    elif strategy.model.task_kind not in model.task_kinds:
        supported = ", ".join(sorted(k.value for k in model.task_kinds))
        add(
            ViolationCode.V5,
            strategy.model.model,
            f"{model.name} does not support {strategy.model.task_kind.value} (supports: {supported})",
        )

    # V6: hierarchy shape; sensor-hint problems were already reported as V1.
    try:
        problems = validate_decomposition(decomp, kb)
    except DecompositionError as exc:
        add(ViolationCode.V6, decomp.root_id, str(exc))
        problems = []
    for p in problems:
        if p.code != "unknown-sensor-hint":
            add(ViolationCode.V6, p.subject, f"{p.code}: {p.detail}")
    root = decomp.get(decomp.root_id)
    if root is not None and root.level is not strategy.level:
        add(
            ViolationCode.V6,
            decomp.root_id,
            f"strategy level is {strategy.level.value} but the root behavior is {root.level.value}",
        )

    # V7 and V8
    uncovered: list[tuple[str, str]] = []
    for i, f in enumerate(strategy.features):
        if not f.behavior.strip():
            continue  # already V2
        subject = _feature_subject(strategy, i)
        try:
            needed = required_sensors(f, decomp, kb)
        except IncomputableFeatureError as exc:
            add(ViolationCode.V7, subject, str(exc))
            continue
        available = {s.name for s in map(lambda n: lookup_sensor(kb, n), sources.sensors) if s}
        available.add(TIME_SENSOR)
        missing = sorted(needed - available)
        if missing:
            uncovered.append((subject, f"data sources lack {', '.join(missing)}"))
            continue
        if f.display_name not in sources.justification:
            uncovered.append((subject, "feature has no entry in the data source justification"))
            continue
        extra = sorted(sources.justification[f.display_name] - sources.sensors)
        if extra:
            uncovered.append((subject, f"justification uses unselected sensors {', '.join(extra)}"))
    for subject, detail in uncovered:
        add(ViolationCode.V8, subject, detail)

    found.sort(key=lambda v: _CODE_ORDER[v.code])  # stable: keeps discovery order within a code
    return ValidationReport(tuple(found))


_HARDWARE_WORDS = ("sensor", "meter", "scope", "phone", "radio", "heart", "rate", "pulse", "step", "camera")
_SOFTWARE_WORDS = ("app", "call", "message", "sms", "chat", "social", "notification", "keyboard", "typing", "email")
_CONTEXT_WORDS = ("screen", "time", "date", "day", "battery", "charge", "hour", "clock")


def guess_sensor_category(name: str, kb: KnowledgeBase) -> SensorCategory | None:
    """Best-effort category for an unknown sensor name, for repair hints."""
    found = lookup_sensor(kb, name)
    if found:
        return found.category
    if found.suggestions:
        return lookup_sensor(kb, found.suggestions[0]).category
    key = normalize_name(name)
    for category, words in (
        (SensorCategory.SOFTWARE, _SOFTWARE_WORDS),
        (SensorCategory.CONTEXTUAL, _CONTEXT_WORDS),
        (SensorCategory.HARDWARE, _HARDWARE_WORDS),
    ):
        if any(w in key for w in words):
            return category
    return None


def violation_feedback_text(report: ValidationReport, kb: KnowledgeBase) -> str:
    """Bullet list of violations for a repair prompt, ordered by code then subject."""
    lines = []
    for v in sorted(report.violations, key=lambda v: (_CODE_ORDER[v.code], v.subject)):
        line = f"- [{v.code.value}] {v.subject}: {v.detail}"
        if v.code is ViolationCode.V1:
            category = guess_sensor_category(v.subject, kb)
            if category is None:
                groups = "; ".join(
                    f"{c.value}: {', '.join(s.name for s in sensors_by_category(kb, c))}"
                    for c in SensorCategory
                )
                line += f". Use only known sensors. {groups}"
            else:
                names = ", ".join(s.name for s in sensors_by_category(kb, category))
                line += f". Valid {category.value} sensors: {names}"
        lines.append(line)
    return "\n".join(lines)
