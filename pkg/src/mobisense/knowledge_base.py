"""Knowledge base of sensors, feature metrics, time spans, and models.

The shipped document lives in ``mobisense/data/knowledge_base.yaml``; its
schema is described in ``docs/formats.md``.  A loaded :class:`KnowledgeBase`
is immutable and can be shared freely between threads.
"""

from __future__ import annotations

import functools
import os
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import IO, Any

import yaml

from .fuzzy import closest_exact, normalize_name, suggest


class KnowledgeBaseError(ValueError):
    """Base class for knowledge base loading problems."""


class KBFormatError(KnowledgeBaseError):
    pass


class KBSchemaError(KnowledgeBaseError):
    pass


class KBUniquenessError(KnowledgeBaseError):
    pass


class SensorCategory(str, Enum):
    HARDWARE = "Hardware"
    SOFTWARE = "Software"
    CONTEXTUAL = "Contextual"


class MetricCategory(str, Enum):
    STATISTICAL = "Statistical"
    REGULARITY = "Regularity"
    RELATION = "Relation"
    DIVERSITY = "Diversity"
    SIMILARITY = "Similarity"
    SPATIAL = "Spatial"
    TEMPORAL = "Temporal"
    OTHER = "Other"


class TimeSpanKind(str, Enum):
    DURATION = "Duration"
    PERIODICITY = "Periodicity"


class TaskKind(str, Enum):
    REGRESSION = "Regression"
    CLASSIFICATION = "Classification"


@dataclass(frozen=True)
class SensorSpec:
    name: str
    category: SensorCategory
    aliases: tuple[str, ...] = ()
    description: str = ""
    availability_note: str = ""


@dataclass(frozen=True)
class MetricSpec:
    category: MetricCategory
    name: str
    description: str = ""


# Placeholder vocabularies for time-span patterns.
_NUMBER_WORDS = (
    "a|an|one|two|three|four|five|six|seven|eight|nine|ten|eleven|twelve"
    "|fourteen|fifteen|twenty|thirty|sixty|ninety"
)
PLACEHOLDERS: dict[str, str] = {
    "epoch": (
        r"(?:early |late )?(?:morning|afternoon|evening|night|midnight|daytime|nighttime"
        r"|weeknight|weekday|weekend|weekend night|weekend day|workday|day|sleep period)"
    ),
    "n": rf"(?:\d+|{_NUMBER_WORDS})",
    "unit": r"(?:second|minute|hour|day|night|week|month|year)s?",
    "recurrence": r"(?:hourly|daily|nightly|weekly|biweekly|monthly|yearly)",
    "period": r"(?:hour|day|night|week|month|year)",
}
_PLACEHOLDER_RE = re.compile(r"<([a-z_]+)>")


@dataclass(frozen=True)
class TimeSpanForm:
    kind: TimeSpanKind
    pattern: str
    regex: re.Pattern[str] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.pattern.strip():
            raise KBSchemaError("time span pattern must be non-empty")
        parts = []
        pos = 0
        for m in _PLACEHOLDER_RE.finditer(self.pattern):
            if m.group(1) not in PLACEHOLDERS:
                raise KBSchemaError(
                    f"unknown placeholder <{m.group(1)}> in time span pattern {self.pattern!r}; "
                    f"known: {', '.join(sorted(PLACEHOLDERS))}"
                )
            parts.append(_literal_regex(self.pattern[pos : m.start()]))
            parts.append(PLACEHOLDERS[m.group(1)])
            pos = m.end()
        parts.append(_literal_regex(self.pattern[pos:]))
        regex = re.compile("".join(parts), re.IGNORECASE)
        object.__setattr__(self, "regex", regex)

    def matches(self, expression: str) -> bool:
        return self.regex.fullmatch(" ".join(expression.split())) is not None


def _literal_regex(text: str) -> str:
    return r"\s+".join(re.escape(w) for w in text.split(" ")) if text else ""


@dataclass(frozen=True)
class ModelSpec:
    name: str
    task_kinds: frozenset[TaskKind]
    notes: str = ""


@dataclass(frozen=True)
class NotFound:
    """Failed lookup; carries up to three close names."""

    query: str
    suggestions: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return False


@dataclass(frozen=True)
class KnowledgeBase:
    version: str
    sensors: tuple[SensorSpec, ...]
    metrics: tuple[MetricSpec, ...]
    time_span_forms: tuple[TimeSpanForm, ...]
    models: tuple[ModelSpec, ...]
    _sensor_index: dict[str, SensorSpec] = field(
        init=False, repr=False, compare=False, hash=False
    )

    def __post_init__(self) -> None:
        index: dict[str, SensorSpec] = {}
        for sensor in self.sensors:
            for spelling in (sensor.name, *sensor.aliases):
                key = normalize_name(spelling)
                other = index.get(key)
                if other is not None and other is not sensor:
                    raise KBUniquenessError(
                        f"sensor name or alias {spelling!r} is used by both "
                        f"{other.name!r} and {sensor.name!r}"
                    )
                index[key] = sensor
        object.__setattr__(self, "_sensor_index", index)

        seen_metrics: set[tuple[MetricCategory, str]] = set()
        for metric in self.metrics:
            key = (metric.category, normalize_name(metric.name))
            if key in seen_metrics:
                raise KBUniquenessError(
                    f"metric {metric.name!r} declared twice in category {metric.category.value}"
                )
            seen_metrics.add(key)

        seen_models: set[str] = set()
        for model in self.models:
            key = normalize_name(model.name)
            if key in seen_models:
                raise KBUniquenessError(f"model {model.name!r} declared twice")
            if not model.task_kinds:
                raise KBSchemaError(f"model {model.name!r} has no task kinds")
            seen_models.add(key)

    # Candidate spellings for fuzzy matching, as (spelling, canonical) pairs.
    def sensor_spellings(self) -> list[tuple[str, str]]:
        return [(s, sensor.name) for sensor in self.sensors for s in (sensor.name, *sensor.aliases)]

    def metric_spellings(self) -> list[tuple[str, str]]:
        return [(m.name, m.name) for m in self.metrics]

    def model_spellings(self) -> list[tuple[str, str]]:
        return [(m.name, m.name) for m in self.models]

    def sensor_names(self) -> list[str]:
        return [s.name for s in self.sensors]


# -- loading -----------------------------------------------------------------


class _LineLoader(yaml.SafeLoader):
    """SafeLoader that remembers the source line of every mapping."""


def _construct_mapping(loader: _LineLoader, node: yaml.MappingNode) -> dict[str, Any]:
    mapping = loader.construct_mapping(node, deep=True)
    mapping["__line__"] = node.start_mark.line + 1
    return mapping


_LineLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping
)


def _where(item: dict[str, Any], path: str) -> str:
    line = item.get("__line__")
    return f"{path} (line {line})" if line else path


def _require(item: Any, key: str, path: str, kind: type = str) -> Any:
    if not isinstance(item, dict):
        raise KBFormatError(f"{path}: expected a mapping, got {type(item).__name__}")
    if key not in item:
        raise KBFormatError(f"{_where(item, path)}: missing field {key!r}")
    value = item[key]
    if kind is str and isinstance(value, (int, float)) and not isinstance(value, bool):
        value = str(value)
    if not isinstance(value, kind):
        raise KBFormatError(
            f"{_where(item, path)}.{key}: expected {kind.__name__}, got {type(value).__name__}"
        )
    return value


def _enum(enum_cls: type[Enum], value: Any, item: dict[str, Any], path: str) -> Any:
    try:
        return enum_cls(value)
    except ValueError:
        allowed = ", ".join(e.value for e in enum_cls)
        raise KBSchemaError(
            f"{_where(item, path)}: unknown {enum_cls.__name__} {value!r} (expected one of: {allowed})"
        ) from None


def _list_field(doc: dict[str, Any], key: str) -> list[Any]:
    value = doc.get(key, [])
    if value is None:
        return []
    if not isinstance(value, list):
        raise KBFormatError(f"{key}: expected a list, got {type(value).__name__}")
    return value


def parse_knowledge_base(text: str, origin: str = "<string>") -> KnowledgeBase:
    """Parse and validate a knowledge base document given as YAML text."""
    try:
        doc = yaml.load(text, Loader=_LineLoader)  # noqa: S506 - SafeLoader subclass
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise KBFormatError(f"{origin}: malformed YAML{where}: {exc}") from exc
    if not isinstance(doc, dict):
        raise KBFormatError(f"{origin}: expected a mapping at top level, got an empty or scalar document")
    if "version" not in doc:
        raise KBFormatError(f"{origin}: missing top-level field 'version'")

    sensors = []
    seen_sensor_names: set[str] = set()
    for i, item in enumerate(_list_field(doc, "sensors")):
        path = f"sensors[{i}]"
        name = _require(item, "name", path).strip()
        if not name:
            raise KBFormatError(f"{_where(item, path)}: sensor name is empty")
        if normalize_name(name) in seen_sensor_names:
            raise KBUniquenessError(f"{_where(item, path)}: duplicate sensor {name!r}")
        seen_sensor_names.add(normalize_name(name))
        aliases = item.get("aliases") or []
        if not isinstance(aliases, list) or not all(isinstance(a, str) for a in aliases):
            raise KBFormatError(f"{_where(item, path)}.aliases: expected a list of strings")
        sensors.append(
            SensorSpec(
                name=name,
                category=_enum(SensorCategory, _require(item, "category", path), item, path),
                aliases=tuple(a.strip() for a in aliases),
                description=str(item.get("description", "")),
                availability_note=str(item.get("availability_note", "")),
            )
        )

    metrics = []
    for i, item in enumerate(_list_field(doc, "metrics")):
        path = f"metrics[{i}]"
        metrics.append(
            MetricSpec(
                category=_enum(MetricCategory, _require(item, "category", path), item, path),
                name=_require(item, "name", path).strip(),
                description=str(item.get("description", "")),
            )
        )

    forms = []
    for i, item in enumerate(_list_field(doc, "time_span_forms")):
        path = f"time_span_forms[{i}]"
        kind = _enum(TimeSpanKind, _require(item, "kind", path), item, path)
        try:
            forms.append(TimeSpanForm(kind=kind, pattern=_require(item, "pattern", path)))
        except KBSchemaError as exc:
            raise KBSchemaError(f"{_where(item, path)}: {exc}") from None

    models = []
    for i, item in enumerate(_list_field(doc, "models")):
        path = f"models[{i}]"
        kinds = _require(item, "task_kinds", path, list)
        models.append(
            ModelSpec(
                name=_require(item, "name", path).strip(),
                task_kinds=frozenset(_enum(TaskKind, k, item, path) for k in kinds),
                notes=str(item.get("notes", "")),
            )
        )

    return KnowledgeBase(
        version=str(doc["version"]),
        sensors=tuple(sensors),
        metrics=tuple(metrics),
        time_span_forms=tuple(forms),
        models=tuple(models),
    )


def load_knowledge_base(source: str | os.PathLike[str] | IO[str]) -> KnowledgeBase:
    """Load a knowledge base from a file path or an open text stream."""
    if hasattr(source, "read"):
        return parse_knowledge_base(source.read(), getattr(source, "name", "<stream>"))
    path = os.fspath(source)
    with open(path, encoding="utf-8") as fh:
        return parse_knowledge_base(fh.read(), path)


@functools.lru_cache(maxsize=1)
def default_knowledge_base() -> KnowledgeBase:
    """The knowledge base shipped with the package."""
    text = resources.files("mobisense").joinpath("data/knowledge_base.yaml").read_text("utf-8")
    return parse_knowledge_base(text, "knowledge_base.yaml")


# -- queries -----------------------------------------------------------------


def lookup_sensor(kb: KnowledgeBase, name: str) -> SensorSpec | NotFound:
    """Find a sensor by name or alias, ignoring case and surrounding space."""
    spec = kb._sensor_index.get(normalize_name(name))
    if spec is not None:
        return spec
    return NotFound(name, tuple(suggest(name, kb.sensor_spellings())))


def sensors_by_category(kb: KnowledgeBase, category: SensorCategory | str) -> list[SensorSpec]:
    category = SensorCategory(category)
    return [s for s in kb.sensors if s.category is category]


def lookup_metric(
    kb: KnowledgeBase, name: str, category: MetricCategory | str | None = None
) -> MetricSpec | NotFound:
    """Find a metric by name, optionally restricted to one category.

    Names are not unique across categories ("frequency" is both Statistical
    and Temporal); without a category the first declared match wins.
    """
    key = normalize_name(name)
    wanted = MetricCategory(category) if category is not None else None
    for metric in kb.metrics:
        if normalize_name(metric.name) == key and (wanted is None or metric.category is wanted):
            return metric
    return NotFound(name, tuple(suggest(name, kb.metric_spellings())))


def lookup_model(kb: KnowledgeBase, name: str) -> ModelSpec | NotFound:
    key = normalize_name(name)
    for model in kb.models:
        if normalize_name(model.name) == key:
            return model
    return NotFound(name, tuple(suggest(name, kb.model_spellings())))


def nearest_sensor(kb: KnowledgeBase, name: str) -> tuple[int, list[str]]:
    """Whole-name edit distance to the closest sensor names or aliases."""
    return closest_exact(name, kb.sensor_spellings())


def match_time_span(
    kb: KnowledgeBase, kind: TimeSpanKind | str, expression: str
) -> TimeSpanForm | None:
    """Return the first form of ``kind`` whose pattern matches ``expression``."""
    kind = TimeSpanKind(kind)
    for form in kb.time_span_forms:
        if form.kind is kind and form.matches(expression):
            return form
    return None


def kb_summary(kb: KnowledgeBase) -> dict[str, Any]:
    counts = {c: 0 for c in SensorCategory}
    for sensor in kb.sensors:
        counts[sensor.category] += 1
    return {
        "version": kb.version,
        "hardware": counts[SensorCategory.HARDWARE],
        "software": counts[SensorCategory.SOFTWARE],
        "contextual": counts[SensorCategory.CONTEXTUAL],
        "metrics": len(kb.metrics),
        "metrics_categories": len({m.category for m in kb.metrics}),
        "time_span_forms": len(kb.time_span_forms),
        "models": len(kb.models),
    }
