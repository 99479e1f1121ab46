"""Canonical strategy encoding and parsing of model completions.

The canonical form is JSON with a fixed key order, two-space indentation,
sorted sensor sets, and a trailing newline.  Models are asked to return it
inside a fenced block tagged ``strategy``::

    ```strategy
    { "objective": ..., ... }
    ```

The exact layout is documented in ``docs/formats.md``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any

from .behavior import BehaviorDecomposition, BehaviorLevel, BehaviorNode, DecompositionError, check_structure
from .fuzzy import closest_exact
from .knowledge_base import (
    KnowledgeBase,
    MetricCategory,
    SensorCategory,
    TaskKind,
    TimeSpanKind,
    default_knowledge_base,
    lookup_metric,
    lookup_model,
    lookup_sensor,
    nearest_sensor,
)
from .strategy import (
    DataSourceSelection,
    FeatureSpec,
    Inquiry,
    MetricRef,
    ModelSuggestion,
    PerformanceEstimate,
    PerformanceTier,
    SensingStrategy,
    Step,
    StepTrace,
    TimeSpan,
    feature_display_name,
)

BLOCK_TAG = "strategy"

SECTIONS = (
    "inquiry",
    "objective",
    "level",
    "behaviors",
    "features",
    "data_sources",
    "model",
    "performance",
    "reasoning",
)
REQUIRED_SECTIONS = ("objective", "level", "behaviors", "features", "data_sources", "model", "performance")

# Whole-name edit distance at or below which a misspelt name is auto-corrected.
AUTOCORRECT_DISTANCE = 1


class Severity(str, Enum):
    ERROR = "Error"
    WARNING = "Warning"


@dataclass(frozen=True)
class ParseDiagnostic:
    severity: Severity
    code: str
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity.value} {self.code} at {self.location or '<root>'}: {self.message}"

    def to_dict(self) -> dict[str, str]:
        return {
            "severity": self.severity.value,
            "code": self.code,
            "location": self.location,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, data: dict[str, str]) -> ParseDiagnostic:
        return cls(Severity(data["severity"]), data["code"], data["location"], data["message"])


def has_errors(diagnostics: list[ParseDiagnostic]) -> bool:
    return any(d.severity is Severity.ERROR for d in diagnostics)


# -- encoding ----------------------------------------------------------------


def strategy_to_dict(strategy: SensingStrategy) -> dict[str, Any]:
    decomp = strategy.decomposition
    return {
        "inquiry": strategy.inquiry.raw_text,
        "objective": strategy.objective,
        "level": strategy.level.value,
        "behaviors": {
            "root": decomp.root_id,
            "nodes": [
                {
                    "id": n.id,
                    "label": n.label,
                    "level": n.level.value,
                    "sensor_hints": list(n.sensor_hints),
                }
                for n in decomp.nodes
            ],
            "edges": [[p, c] for p, c in decomp.edges],
        },
        "features": [
            {
                "display_name": f.display_name,
                "metric": None
                if f.metric is None
                else {"category": f.metric.category.value, "name": f.metric.name},
                "time_span": None
                if f.time_span is None
                else {"kind": f.time_span.kind.value, "expression": f.time_span.expression},
                "behavior": f.behavior,
            }
            for f in strategy.features
        ],
        "data_sources": {
            "sensors": sorted(strategy.data_sources.sensors),
            "justification": {
                k: sorted(v) for k, v in sorted(strategy.data_sources.justification.items())
            },
        },
        "model": {
            "name": strategy.model.model,
            "task_kind": strategy.model.task_kind.value,
            "rationale": strategy.model.rationale,
        },
        "performance": {
            "tier": strategy.performance.tier.value,
            "rationale": strategy.performance.rationale,
        },
        "reasoning": [
            {"step": t.step.value, "text": t.reasoning_text, "ref": t.raw_completion_ref}
            for t in strategy.reasoning
        ],
    }


def dump_canonical(data: dict[str, Any]) -> str:
    return json.dumps(data, indent=2, ensure_ascii=False) + "\n"


def encode_canonical(strategy: SensingStrategy) -> str:
    """Deterministic text form of ``strategy``."""
    return dump_canonical(strategy_to_dict(strategy))


def fenced(block: str) -> str:
    return f"```{BLOCK_TAG}\n{block.rstrip()}\n```"


# -- decoding ----------------------------------------------------------------


class _Decoder:
    """Walks a parsed JSON document, collecting diagnostics instead of raising."""

    def __init__(self) -> None:
        self.diagnostics: list[ParseDiagnostic] = []

    def error(self, code: str, location: str, message: str) -> None:
        self.diagnostics.append(ParseDiagnostic(Severity.ERROR, code, location, message))

    def warn(self, code: str, location: str, message: str) -> None:
        self.diagnostics.append(ParseDiagnostic(Severity.WARNING, code, location, message))

    def unknown_fields(self, obj: dict[str, Any], allowed: tuple[str, ...], path: str) -> None:
        for key in obj:
            if key not in allowed:
                self.warn("unknown-field", _join(path, key), f"unexpected field {key!r} ignored")

    def obj(self, value: Any, path: str) -> dict[str, Any] | None:
        if not isinstance(value, dict):
            self.error("bad-type", path, f"expected an object, got {_json_type(value)}")
            return None
        return value

    def array(self, value: Any, path: str) -> list[Any] | None:
        if not isinstance(value, list):
            self.error("bad-type", path, f"expected an array, got {_json_type(value)}")
            return None
        return value

    def text(self, obj: dict[str, Any], key: str, path: str, required: bool = True) -> str | None:
        where = _join(path, key)
        if key not in obj or obj[key] is None:
            if required:
                self.error("missing-field", where, f"required field {key!r} is missing")
                return None
            return ""
        value = obj[key]
        if not isinstance(value, str):
            self.error("bad-type", where, f"expected a string, got {_json_type(value)}")
            return None
        return value

    def strings(self, obj: dict[str, Any], key: str, path: str) -> list[str] | None:
        where = _join(path, key)
        value = obj.get(key, [])
        if value is None:
            return []
        items = self.array(value, where)
        if items is None:
            return None
        if not all(isinstance(v, str) for v in items):
            self.error("bad-type", where, "expected an array of strings")
            return None
        return items

    def enum(self, enum_cls: type[Enum], obj: dict[str, Any], key: str, path: str) -> Any:
        raw = self.text(obj, key, path)
        if raw is None:
            return None
        for member in enum_cls:
            if member.value.casefold() == raw.strip().casefold():
                return member
        allowed = ", ".join(m.value for m in enum_cls)
        self.error("bad-enum", _join(path, key), f"{raw!r} is not one of: {allowed}")
        return None


def _join(path: str, key: str | int) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else key


def _json_type(value: Any) -> str:
    return {dict: "object", list: "array", str: "string", bool: "boolean", type(None): "null"}.get(
        type(value), "number"
    )


def _decode_behaviors(d: _Decoder, raw: Any) -> BehaviorDecomposition | None:
    section = d.obj(raw, "behaviors")
    if section is None:
        return None
    d.unknown_fields(section, ("root", "nodes", "edges"), "behaviors")
    root = d.text(section, "root", "behaviors")
    nodes_raw = d.array(section.get("nodes"), "behaviors.nodes") if "nodes" in section else None
    if "nodes" not in section:
        d.error("missing-field", "behaviors.nodes", "required field 'nodes' is missing")
    nodes: list[BehaviorNode] = []
    ok = root is not None and nodes_raw is not None
    for i, item in enumerate(nodes_raw or []):
        path = f"behaviors.nodes[{i}]"
        obj = d.obj(item, path)
        if obj is None:
            ok = False
            continue
        d.unknown_fields(obj, ("id", "label", "level", "sensor_hints"), path)
        node_id = d.text(obj, "id", path)
        label = d.text(obj, "label", path)
        level = d.enum(BehaviorLevel, obj, "level", path)
        hints = d.strings(obj, "sensor_hints", path)
        if None in (node_id, label, level, hints):
            ok = False
            continue
        try:
            nodes.append(BehaviorNode(node_id, label, level, tuple(hints)))
        except ValueError as exc:
            d.error("invalid-node", path, str(exc))
            ok = False

    edges: list[tuple[str, str]] = []
    edges_raw = d.array(section.get("edges", []), "behaviors.edges")
    for i, item in enumerate(edges_raw or []):
        if isinstance(item, list) and len(item) == 2 and all(isinstance(x, str) for x in item):
            edges.append((item[0], item[1]))
        else:
            d.error("bad-type", f"behaviors.edges[{i}]", "expected a [parent, child] pair of ids")
            ok = False
    if edges_raw is None or not ok:
        return None
    decomp = BehaviorDecomposition(root, tuple(nodes), tuple(edges))
    try:
        check_structure(decomp)
    except DecompositionError as exc:
        d.error("bad-structure", "behaviors", str(exc))
        return None
    return decomp


def _decode_features(
    d: _Decoder, raw: Any, decomp: BehaviorDecomposition | None
) -> list[FeatureSpec] | None:
    items = d.array(raw, "features")
    if items is None:
        return None
    if not items:
        d.error("empty-section", "features", "a strategy needs at least one feature")
        return None
    features: list[FeatureSpec] = []
    ok = True
    for i, item in enumerate(items):
        path = f"features[{i}]"
        obj = d.obj(item, path)
        if obj is None:
            ok = False
            continue
        d.unknown_fields(obj, ("display_name", "metric", "time_span", "behavior"), path)
        name = d.text(obj, "display_name", path, required=False)
        behavior = d.text(obj, "behavior", path, required=False)

        metric = None
        if obj.get("metric") is not None:
            mobj = d.obj(obj["metric"], _join(path, "metric"))
            if mobj is None:
                ok = False
            else:
                mpath = _join(path, "metric")
                d.unknown_fields(mobj, ("category", "name"), mpath)
                category = d.enum(MetricCategory, mobj, "category", mpath)
                mname = d.text(mobj, "name", mpath)
                if category is None or mname is None:
                    ok = False
                else:
                    metric = MetricRef(category, mname)

        span = None
        if obj.get("time_span") is not None:
            tpath = _join(path, "time_span")
            tobj = d.obj(obj["time_span"], tpath)
            if tobj is None:
                ok = False
            else:
                d.unknown_fields(tobj, ("kind", "expression"), tpath)
                kind = d.enum(TimeSpanKind, tobj, "kind", tpath)
                expr = d.text(tobj, "expression", tpath)
                if kind is None or expr is None:
                    ok = False
                else:
                    span = TimeSpan(kind, expr)

        if name is None or behavior is None:
            ok = False
            continue
        if decomp is not None and behavior and decomp.get(behavior) is None:
            d.warn(
                "dangling-behavior-ref",
                _join(path, "behavior"),
                f"behavior {behavior!r} is not a node of the decomposition",
            )
        features.append(FeatureSpec(metric, span, behavior, name))
    return features if ok else None


def _decode_data_sources(d: _Decoder, raw: Any) -> DataSourceSelection | None:
    obj = d.obj(raw, "data_sources")
    if obj is None:
        return None
    d.unknown_fields(obj, ("sensors", "justification"), "data_sources")
    if "sensors" not in obj:
        d.error("missing-field", "data_sources.sensors", "required field 'sensors' is missing")
        return None
    sensors = d.strings(obj, "sensors", "data_sources")
    just_raw = obj.get("justification", {})
    justification: dict[str, frozenset[str]] = {}
    ok = sensors is not None
    jobj = d.obj(just_raw if just_raw is not None else {}, "data_sources.justification")
    if jobj is None:
        return None
    for key in jobj:
        values = d.strings(jobj, key, "data_sources.justification")
        if values is None:
            ok = False
        else:
            justification[key] = frozenset(values)
    if not ok:
        return None
    return DataSourceSelection(frozenset(sensors), justification)


def _decode_model(d: _Decoder, raw: Any) -> ModelSuggestion | None:
    obj = d.obj(raw, "model")
    if obj is None:
        return None
    d.unknown_fields(obj, ("name", "task_kind", "rationale"), "model")
    name = d.text(obj, "name", "model")
    kind = d.enum(TaskKind, obj, "task_kind", "model")
    rationale = d.text(obj, "rationale", "model", required=False)
    if None in (name, kind, rationale):
        return None
    return ModelSuggestion(name, kind, rationale)


def _decode_performance(d: _Decoder, raw: Any) -> PerformanceEstimate | None:
    obj = d.obj(raw, "performance")
    if obj is None:
        return None
    d.unknown_fields(obj, ("tier", "rationale"), "performance")
    tier = d.enum(PerformanceTier, obj, "tier", "performance")
    rationale = d.text(obj, "rationale", "performance")
    if tier is None or rationale is None:
        return None
    if not rationale.strip():
        d.error("missing-field", "performance.rationale", "performance rationale is empty")
        return None
    return PerformanceEstimate(tier, rationale)


def _decode_reasoning(d: _Decoder, raw: Any) -> list[StepTrace] | None:
    items = d.array(raw, "reasoning")
    if items is None:
        return None
    traces: list[StepTrace] = []
    ok = True
    for i, item in enumerate(items):
        path = f"reasoning[{i}]"
        obj = d.obj(item, path)
        if obj is None:
            ok = False
            continue
        d.unknown_fields(obj, ("step", "text", "ref"), path)
        step = d.enum(Step, obj, "step", path)
        text = d.text(obj, "text", path, required=False)
        ref = d.text(obj, "ref", path, required=False)
        if None in (step, text, ref):
            ok = False
            continue
        if any(t.step is step for t in traces):
            d.error("duplicate-step", path, f"step {step.value} appears more than once")
            ok = False
            continue
        traces.append(StepTrace(step, text, ref))
    return traces if ok else None


def decode_document(
    doc: Any, inquiry: Inquiry | str | None = None
) -> tuple[SensingStrategy | None, list[ParseDiagnostic]]:
    """Build a strategy from an already-parsed JSON value."""
    d = _Decoder()
    if not isinstance(doc, dict):
        d.error("bad-type", "", f"expected a JSON object at top level, got {_json_type(doc)}")
        return None, d.diagnostics
    d.unknown_fields(doc, SECTIONS, "")
    for key in REQUIRED_SECTIONS:
        if key not in doc:
            d.error("missing-section", key, f"required section {key!r} is missing")
    if "reasoning" not in doc:
        d.warn("missing-section", "reasoning", "no reasoning section; step traces will be empty")

    objective = d.text(doc, "objective", "") if "objective" in doc else None
    level = d.enum(BehaviorLevel, doc, "level", "") if "level" in doc else None
    decomp = _decode_behaviors(d, doc["behaviors"]) if "behaviors" in doc else None
    features = _decode_features(d, doc["features"], decomp) if "features" in doc else None
    sources = _decode_data_sources(d, doc["data_sources"]) if "data_sources" in doc else None
    model = _decode_model(d, doc["model"]) if "model" in doc else None
    performance = _decode_performance(d, doc["performance"]) if "performance" in doc else None
    reasoning = _decode_reasoning(d, doc["reasoning"]) if "reasoning" in doc else []

    inq: Inquiry | None = None
    raw_inquiry = doc.get("inquiry")
    try:
        if isinstance(raw_inquiry, str) and raw_inquiry.strip():
            inq = Inquiry(raw_inquiry)
        elif isinstance(inquiry, Inquiry):
            inq = inquiry
        elif isinstance(inquiry, str):
            inq = Inquiry(inquiry)
        elif objective:
            inq = Inquiry(objective)
    except ValueError:
        inq = None
    if raw_inquiry is not None and not isinstance(raw_inquiry, str):
        d.error("bad-type", "inquiry", f"expected a string, got {_json_type(raw_inquiry)}")

    if objective is not None and not objective.strip():
        d.error("missing-field", "objective", "objective is empty")

    if has_errors(d.diagnostics) or None in (
        inq, objective, level, decomp, features, sources, model, performance, reasoning
    ):
        if not has_errors(d.diagnostics):
            d.error("incomplete", "", "strategy could not be assembled")
        return None, d.diagnostics
    strategy = SensingStrategy(
        inquiry=inq,
        objective=objective,
        level=level,
        decomposition=decomp,
        features=tuple(features),
        data_sources=sources,
        model=model,
        performance=performance,
        reasoning=tuple(reasoning),
    )
    return strategy, d.diagnostics


def decode_canonical(
    text: str, inquiry: Inquiry | str | None = None
) -> tuple[SensingStrategy | None, list[ParseDiagnostic]]:
    """Inverse of :func:`encode_canonical`.

    Unknown fields produce warnings; missing sections, wrong types and values
    outside the closed enumerations produce errors, in which case no strategy
    is returned.  ``inquiry`` fills in for a document without an inquiry
    section.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        return None, [
            ParseDiagnostic(Severity.ERROR, "malformed", f"line {exc.lineno}, column {exc.colno}", exc.msg)
        ]
    except (ValueError, RecursionError) as exc:
        # e.g. integers beyond the interpreter's digit limit, absurd nesting
        return None, [ParseDiagnostic(Severity.ERROR, "malformed", "", str(exc) or type(exc).__name__)]
    return decode_document(doc, inquiry)


# -- completion parsing ------------------------------------------------------


def _fence_open(line: str) -> tuple[str, str] | None:
    """Return (fence, info string) when ``line`` opens a fenced block."""
    stripped = line.strip()
    for ch in "`~":
        if stripped.startswith(ch * 3):
            fence = stripped[: len(stripped) - len(stripped.lstrip(ch))]
            return fence, stripped[len(fence):].strip()
    return None


def _is_fence_close(line: str, fence: str) -> bool:
    stripped = line.strip()
    return len(stripped) >= len(fence) and set(stripped) == {fence[0]}


def extract_structured_block(completion: str) -> tuple[str | None, list[ParseDiagnostic]]:
    """Return the body of the first fenced block tagged ``strategy``.

    Prose before and after is ignored.  Later strategy blocks are ignored with
    a ``multiple-blocks`` warning; a block that is never closed runs to the end
    of the text with an ``unterminated-block`` warning.
    """
    diagnostics: list[ParseDiagnostic] = []
    lines = completion.splitlines()
    found: list[str] = []
    i = 0
    while i < len(lines):
        opened = _fence_open(lines[i])
        if opened is None:
            i += 1
            continue
        fence, info = opened
        tag = info.split()[0].casefold() if info else ""
        body: list[str] = []
        i += 1
        closed = False
        while i < len(lines):
            if _is_fence_close(lines[i], fence):
                closed = True
                i += 1
                break
            body.append(lines[i])
            i += 1
        if tag == BLOCK_TAG:
            found.append("\n".join(body))
            if not closed:
                diagnostics.append(
                    ParseDiagnostic(
                        Severity.WARNING,
                        "unterminated-block",
                        "",
                        "strategy block is not closed; using the rest of the completion",
                    )
                )
    if not found:
        return None, diagnostics
    if len(found) > 1:
        diagnostics.append(
            ParseDiagnostic(
                Severity.WARNING,
                "multiple-blocks",
                "",
                f"{len(found)} strategy blocks found; using the first",
            )
        )
    return found[0], diagnostics


class _Normalizer:
    def __init__(self, kb: KnowledgeBase) -> None:
        self.kb = kb
        self.diagnostics: list[ParseDiagnostic] = []

    def _fix(self, kind: str, name: str, path: str, canonical: list[str], distance: int, suggestions: tuple[str, ...]) -> str:
        if distance <= AUTOCORRECT_DISTANCE and len(canonical) == 1:
            self.diagnostics.append(
                ParseDiagnostic(
                    Severity.WARNING,
                    "auto-corrected",
                    path,
                    f"unknown {kind} {name!r} corrected to {canonical[0]!r}",
                )
            )
            return canonical[0]
        hint = f"; did you mean: {', '.join(suggestions)}?" if suggestions else ""
        self.diagnostics.append(
            ParseDiagnostic(Severity.ERROR, f"unknown-{kind}", path, f"{name!r} is not a known {kind}{hint}")
        )
        return name

    def sensor(self, name: str, path: str) -> str:
        spec = lookup_sensor(self.kb, name)
        if spec:
            return spec.name
        distance, canonical = nearest_sensor(self.kb, name)
        return self._fix("sensor", name, path, canonical, distance, spec.suggestions)

    def metric(self, ref: MetricRef, path: str) -> MetricRef:
        exact = lookup_metric(self.kb, ref.name, ref.category)
        if exact:
            return MetricRef(exact.category, exact.name)
        anywhere = lookup_metric(self.kb, ref.name)
        if anywhere:
            # Known name filed under another category; the validator reports it.
            return MetricRef(ref.category, anywhere.name)
        distance, canonical = closest_exact(ref.name, self.kb.metric_spellings())
        fixed = self._fix("metric", ref.name, path, canonical, distance, anywhere.suggestions)
        return MetricRef(ref.category, fixed)

    def model(self, name: str, path: str) -> str:
        spec = lookup_model(self.kb, name)
        if spec:
            return spec.name
        distance, canonical = closest_exact(name, self.kb.model_spellings())
        return self._fix("model", name, path, canonical, distance, spec.suggestions)

    def strategy(self, s: SensingStrategy) -> SensingStrategy:
        decomp = s.decomposition
        nodes = tuple(
            replace(
                n,
                sensor_hints=tuple(
                    self.sensor(h, f"behaviors.nodes[{i}].sensor_hints[{j}]")
                    for j, h in enumerate(n.sensor_hints)
                ),
            )
            for i, n in enumerate(decomp.nodes)
        )
        decomp = replace(decomp, nodes=nodes)

        features = []
        for i, f in enumerate(s.features):
            behavior = f.behavior
            if behavior and decomp.get(behavior) is None:
                by_label = decomp.find_by_label(behavior)
                if by_label is not None:
                    self.diagnostics.append(
                        ParseDiagnostic(
                            Severity.WARNING,
                            "auto-corrected",
                            f"features[{i}].behavior",
                            f"behavior label {behavior!r} resolved to node id {by_label.id!r}",
                        )
                    )
                    behavior = by_label.id
            metric = self.metric(f.metric, f"features[{i}].metric.name") if f.metric else None
            f = replace(f, metric=metric, behavior=behavior)
            if not f.display_name.strip():
                f = replace(f, display_name=feature_display_name(f, decomp))
            features.append(f)

        sources = DataSourceSelection(
            frozenset(self.sensor(x, "data_sources.sensors") for x in sorted(s.data_sources.sensors)),
            {
                key: frozenset(self.sensor(x, f"data_sources.justification.{key}") for x in sorted(vals))
                for key, vals in s.data_sources.justification.items()
            },
        )
        model = replace(s.model, model=self.model(s.model.model, "model.name"))
        return replace(s, decomposition=decomp, features=tuple(features), data_sources=sources, model=model)


@dataclass(frozen=True)
class ParseResult:
    """Outcome of parsing one completion.

    ``candidate`` is the decoded and normalised strategy even when
    normalisation found errors (e.g. an unknown sensor), so the caller can
    still run the validator on it; ``strategy`` is set only when there were
    no errors at all.
    """

    strategy: SensingStrategy | None
    candidate: SensingStrategy | None
    diagnostics: tuple[ParseDiagnostic, ...]
    block: str | None


def parse_strategy_text(
    text: str, kb: KnowledgeBase, inquiry: Inquiry | str | None = None
) -> ParseResult:
    """Decode canonical text and canonicalise names against ``kb``."""
    strategy, diagnostics = decode_canonical(text, inquiry)
    if strategy is None:
        return ParseResult(None, None, tuple(diagnostics), text)
    normalizer = _Normalizer(kb)
    candidate = normalizer.strategy(strategy)
    diagnostics = diagnostics + normalizer.diagnostics
    accepted = None if has_errors(diagnostics) else candidate
    return ParseResult(accepted, candidate, tuple(diagnostics), text)


def parse_llm_completion(
    completion: str, kb: KnowledgeBase, inquiry: Inquiry | str | None = None
) -> ParseResult:
    """Extract, decode, and normalise the strategy inside a completion."""
    block, diagnostics = extract_structured_block(completion)
    if block is None:
        diagnostics.append(
            ParseDiagnostic(
                Severity.ERROR,
                "missing-block",
                "",
                f"no fenced ```{BLOCK_TAG} block found in the completion",
            )
        )
        return ParseResult(None, None, tuple(diagnostics), None)
    result = parse_strategy_text(block, kb, inquiry)
    return replace(result, diagnostics=tuple(diagnostics) + result.diagnostics)


def parse_llm_strategy(
    completion: str, kb: KnowledgeBase
) -> tuple[SensingStrategy | None, list[ParseDiagnostic]]:
    """Parse a model completion into a strategy plus diagnostics.

    Never raises on bad input; every problem becomes a diagnostic.
    """
    result = parse_llm_completion(completion, kb)
    return result.strategy, list(result.diagnostics)


# -- human-readable report ---------------------------------------------------


def _tree_lines(decomp: BehaviorDecomposition) -> list[str]:
    lines: list[str] = []
    on_path: set[str] = set()

    def walk(node_id: str, depth: int) -> None:
        node = decomp.node(node_id)
        hints = f" [{', '.join(node.sensor_hints)}]" if node.sensor_hints else ""
        lines.append(f"{'  ' * depth}- {node.label} ({node.level.value}){hints}")
        if node_id in on_path:
            return
        on_path.add(node_id)
        for child in decomp.children(node_id):
            walk(child, depth + 1)
        on_path.discard(node_id)

    walk(decomp.root_id, 0)
    return lines


def _cell(text: str) -> str:
    return text.replace("|", "\\|").replace("\n", " ")


def render_strategy_markdown(strategy: SensingStrategy, kb: KnowledgeBase | None = None) -> str:
    """Human-readable Markdown report of a strategy."""
    kb = kb or default_knowledge_base()
    decomp = strategy.decomposition
    out = [
        "# Mobile Sensing Strategy",
        "",
        f"Inquiry: {strategy.inquiry.normalized_text}",
        "",
        "## Objective",
        "",
        strategy.objective,
        "",
        "## Behavior Level",
        "",
        f"Behavior Level: {strategy.level.value}",
        "",
        "## Behavior Decomposition",
        "",
        *_tree_lines(decomp),
        "",
        "## Features",
        "",
        "| Feature | Metric | Time span | Behavior |",
        "| --- | --- | --- | --- |",
    ]
    for f in strategy.features:
        node = decomp.get(f.behavior)
        metric = f"{f.metric.name} ({f.metric.category.value})" if f.metric else "-"
        span = f"{f.time_span.expression} ({f.time_span.kind.value})" if f.time_span else "-"
        behavior = f"{node.label} ({node.level.value})" if node else f.behavior
        out.append(
            f"| {_cell(feature_display_name(f, decomp))} | {_cell(metric)} | {_cell(span)} | {_cell(behavior)} |"
        )

    out += ["", "## Data To Collect", ""]
    grouped: dict[str, list[str]] = {c.value: [] for c in SensorCategory}
    for name in sorted(strategy.data_sources.sensors):
        spec = lookup_sensor(kb, name)
        grouped.setdefault(spec.category.value if spec else "Unknown", []).append(name)
    for category, names in grouped.items():
        if category == "Unknown" and not names:
            continue
        out.append(f"### {category}")
        out.append("")
        if not names:
            out.append("- (none)")
        for name in names:
            users = [k for k, v in sorted(strategy.data_sources.justification.items()) if name in v]
            out.append(f"- {name}" + (f": {'; '.join(users)}" if users else ""))
        out.append("")

    out += [
        "## Suggested Model",
        "",
        f"{strategy.model.model} ({strategy.model.task_kind.value})",
    ]
    if strategy.model.rationale:
        out += ["", strategy.model.rationale]
    out += [
        "",
        "## Estimated Performance",
        "",
        f"{strategy.performance.tier.value}: {strategy.performance.rationale}",
        "",
        "## Reasoning",
        "",
    ]
    if not strategy.reasoning:
        out.append("(no reasoning recorded)")
    for n, trace in enumerate(strategy.reasoning, 1):
        out.append(f"{n}. **{trace.step.value}**: {trace.reasoning_text}")
    return "\n".join(out) + "\n"
