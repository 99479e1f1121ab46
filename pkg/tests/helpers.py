"""Shared builders and independent oracles for the test suite."""

from __future__ import annotations

import random
from dataclasses import replace
from importlib import resources
from pathlib import Path

from mobisense.behavior import BehaviorDecomposition, BehaviorLevel, BehaviorNode
from mobisense.codec import decode_canonical, encode_canonical, fenced
from mobisense.knowledge_base import KnowledgeBase, MetricCategory, TimeSpanKind
from mobisense.strategy import (
    DataSourceSelection,
    FeatureSpec,
    Inquiry,
    MetricRef,
    ModelSuggestion,
    PerformanceEstimate,
    SensingStrategy,
    Step,
    StepTrace,
    TimeSpan,
    feature_display_name,
    required_sensors,
)

DATA = Path(str(resources.files("mobisense").joinpath("data")))

MOOD_INQUIRY = "I wish to understand the mood instability of the user during the night"
ENTERTAINMENT_INQUIRY = "I want to know how much time this user spends on entertainment apps during weeknights"

VALID_SPANS = {
    TimeSpanKind.DURATION: ("per night", "during the weekend", "in the last 3 days", "over the past two weeks"),
    TimeSpanKind.PERIODICITY: ("daily", "per day", "every 2 hours", "weekly"),
}


def shipped_strategy(name: str = "mood_instability") -> SensingStrategy:
    text = (DATA / "strategies" / f"{name}.json").read_text(encoding="utf-8")
    strategy, diagnostics = decode_canonical(text)
    assert strategy is not None, diagnostics
    return strategy


def as_completion(strategy: SensingStrategy, prose: str = "Step 1: reasoning.") -> str:
    return f"{prose}\n\n{fenced(encode_canonical(strategy))}\n"


# -- oracles -------------------------------------------------------------------


def levenshtein_oracle(a: str, b: str) -> int:
    """Textbook full-matrix edit distance, written independently of the package."""
    rows = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        rows[i][0] = i
    for j in range(len(b) + 1):
        rows[0][j] = j
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            rows[i][j] = min(rows[i - 1][j] + 1, rows[i][j - 1] + 1, rows[i - 1][j - 1] + cost)
    return rows[len(a)][len(b)]


RANK = {"Context": 0, "Activity": 1, "Category": 2, "Trait": 3}


def decomposition_oracle(decomp: BehaviorDecomposition) -> bool:
    """Accept iff every edge strictly lowers the rank and every leaf is Context."""
    level = {n.id: n.level.value for n in decomp.nodes}
    for parent, child in decomp.edges:
        if not RANK[level[child]] < RANK[level[parent]]:
            return False
    has_children = {p for p, _ in decomp.edges}
    return all(level[i] == "Context" for i in level if i not in has_children)


# -- random generators ---------------------------------------------------------


def random_decomposition(
    rng: random.Random, kb: KnowledgeBase, root_level: BehaviorLevel, valid: bool = True, size: int | None = None
) -> BehaviorDecomposition:
    """A decomposition whose nodes are all reachable from the root.

    With ``valid`` the levels strictly decrease along every edge and every
    leaf is Context; otherwise levels and extra edges are drawn at random.
    """
    sensors = kb.sensor_names()
    levels = list(BehaviorLevel)  # Context, Activity, Category, Trait
    size = size or rng.randint(1, 9)
    if root_level is BehaviorLevel.CONTEXT and valid:
        size = 1
    nodes = [BehaviorNode("n0", "root behavior", root_level)]
    edges: list[tuple[str, str]] = []
    for i in range(1, size):
        if valid:
            parents = [n for n in nodes if n.level is not BehaviorLevel.CONTEXT]
            parent = rng.choice(parents)
            level = rng.choice(levels[: levels.index(parent.level)])
        else:
            parent = rng.choice(nodes)
            level = rng.choice(levels)
        hints = tuple(rng.sample(sensors, rng.randint(1, 3))) if level is BehaviorLevel.CONTEXT else ()
        nodes.append(BehaviorNode(f"n{i}", f"behavior {i}", level, hints))
        edges.append((parent.id, f"n{i}"))
    if not valid:
        for _ in range(rng.randint(0, 3)):
            a, b = rng.choice(nodes).id, rng.choice(nodes).id
            if (a, b) not in edges:
                edges.append((a, b))
    if valid:
        # Grow Context children under any non-Context leaf.
        parents = {p for p, _ in edges}
        for n in list(nodes):
            if n.id not in parents and n.level is not BehaviorLevel.CONTEXT:
                leaf = BehaviorNode(f"n{len(nodes)}", f"behavior {len(nodes)}", BehaviorLevel.CONTEXT,
                                    tuple(rng.sample(sensors, rng.randint(1, 3))))
                nodes.append(leaf)
                edges.append((n.id, leaf.id))
    return BehaviorDecomposition("n0", tuple(nodes), tuple(edges))


def _root_hints_fix(decomp: BehaviorDecomposition, rng: random.Random, kb: KnowledgeBase) -> BehaviorDecomposition:
    root = decomp.root
    if root.level is BehaviorLevel.CONTEXT and not root.sensor_hints:
        new_root = replace(root, sensor_hints=tuple(rng.sample(kb.sensor_names(), 2)))
        return replace(decomp, nodes=(new_root,) + decomp.nodes[1:])
    return decomp


def random_text(rng: random.Random) -> str:
    alphabet = "abcdefghij klmnop  qrstuvwxyz-ÄéßÜ漢字\"\\'{}[],:"
    return "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 40))).strip() or "x"


def random_strategy(
    rng: random.Random, kb: KnowledgeBase, level: BehaviorLevel, metric_category: MetricCategory
) -> SensingStrategy:
    """A strategy that passes every validation rule."""
    decomp = _root_hints_fix(random_decomposition(rng, kb, level), rng, kb)
    categories = [metric_category] + [rng.choice(list(MetricCategory)) for _ in range(rng.randint(0, 3))]
    features: list[FeatureSpec] = []
    seen: set[str] = set()
    for category in categories:
        metric = rng.choice([m for m in kb.metrics if m.category is category])
        kind = rng.choice(list(TimeSpanKind))
        span = TimeSpan(kind, rng.choice(VALID_SPANS[kind]))
        node = rng.choice(decomp.nodes)
        feature = FeatureSpec(MetricRef(category, metric.name), span, node.id)
        feature = replace(feature, display_name=feature_display_name(feature, decomp))
        if feature.display_name not in seen:
            seen.add(feature.display_name)
            features.append(feature)
    justification = {f.display_name: required_sensors(f, decomp, kb) for f in features}
    sensors = frozenset().union(*justification.values())
    model = rng.choice(kb.models)
    task = rng.choice(sorted(model.task_kinds, key=lambda k: k.value))
    steps = rng.sample(list(Step), rng.randint(0, 5))
    return SensingStrategy(
        inquiry=Inquiry(random_text(rng)),
        objective=random_text(rng),
        level=level,
        decomposition=decomp,
        features=tuple(features),
        data_sources=DataSourceSelection(sensors, justification),
        model=ModelSuggestion(model.name, task, random_text(rng)),
        performance=PerformanceEstimate(rng.choice(["Low", "Moderate", "High"]), random_text(rng)),
        reasoning=tuple(StepTrace(s, random_text(rng), f"attempt-1/{s.value}") for s in steps),
    )


# -- adversarial corpus ----------------------------------------------------------


def _doc(strategy: SensingStrategy) -> dict:
    import json

    return json.loads(encode_canonical(strategy))


def _add_sensor(name):
    def f(d):
        d["data_sources"]["sensors"].append(name)
    return f


def _hint(node_id, name):
    def f(d):
        next(n for n in d["behaviors"]["nodes"] if n["id"] == node_id)["sensor_hints"].append(name)
    return f


def _feature(i, **fields):
    def f(d):
        d["features"][i].update(fields)
    return f


def _model(**fields):
    def f(d):
        d["model"].update(fields)
    return f


def _add_node(node_id, level, hints, parent):
    def f(d):
        d["behaviors"]["nodes"].append({"id": node_id, "label": node_id, "level": level, "sensor_hints": hints})
        if parent:
            d["behaviors"]["edges"].append([parent, node_id])
    return f


def _add_edge(parent, child):
    def f(d):
        d["behaviors"]["edges"].append([parent, child])
    return f


def _drop_sensor(name):
    def f(d):
        d["data_sources"]["sensors"].remove(name)
    return f


def _justify(feature_name, sensors):
    def f(d):
        if sensors is None:
            del d["data_sources"]["justification"][feature_name]
        else:
            d["data_sources"]["justification"][feature_name] = sensors
    return f


def _set(key, value):
    def f(d):
        d[key] = value
    return f


REG = "Regularity of sleep start time over the past two weeks"
MSSD = "MSSD of smartphone use during the night"
COUNT = "Count of texting per night"

# (name, mutations, expected violation codes)
ADVERSARIAL = [
    ("unknown data source", [_add_sensor("Heartbeat")], {"V1"}),
    ("unknown hint", [_hint("texting", "Heartbeat")], {"V1"}),
    ("unknown sensor in justification", [_justify(COUNT, ["Keyboard", "Message", "Pulse", "Time"])], {"V1", "V8"}),
    ("feature without span", [_feature(3, time_span=None)], {"V2"}),
    ("feature without metric", [_feature(3, metric=None)], {"V2"}),
    ("feature without behavior", [_feature(3, behavior="")], {"V2"}),
    ("invented metric", [_feature(3, metric={"category": "Statistical", "name": "astrology"})], {"V3"}),
    ("metric in wrong category", [_feature(1, metric={"category": "Diversity", "name": "MSSD"})], {"V3"}),
    ("free-form span", [_feature(2, time_span={"kind": "Duration", "expression": "sometimes"})], {"V4"}),
    ("span of wrong kind", [_feature(0, time_span={"kind": "Periodicity", "expression": "over the past two weeks"})], {"V4"}),
    ("invented model", [_model(name="Transformer")], {"V5"}),
    ("model cannot do task", [_model(name="Linear Regression", task_kind="Classification")], {"V5"}),
    ("level disagrees with root", [_set("level", "Category")], {"V6"}),
    ("context to category edge", [_add_edge("sleep_start", "stress")], {"V6"}),
    ("unreachable node", [_add_node("orphan", "Context", ["Screen"], None)], {"V6"}),
    ("activity leaf", [_add_node("reading", "Activity", [], "happiness")], {"V6"}),
    ("feature on missing behavior", [_feature(3, behavior="ghost")], {"V7"}),
    ("feature on hintless context", [_add_node("idle", "Context", [], "sleeping"), _feature(3, behavior="idle")], {"V7"}),
    ("uncovered sensor", [_drop_sensor("Gyroscope")], {"V8"}),
    ("feature not justified", [_justify(MSSD, None)], {"V8"}),
    ("justification outside selection", [_justify(MSSD, ["Battery", "Screen", "Time"])], {"V8"}),
    ("Time justified but not selected", [_drop_sensor("Time")], {"V8"}),
    ("V1 and V5", [_add_sensor("Heartbeat"), _model(name="Transformer")], {"V1", "V5"}),
    ("V2 and V5", [_feature(3, time_span=None), _model(name="Naive Bayes", task_kind="Regression")], {"V2", "V5"}),
    ("V3 and V4 on one feature",
     [_feature(2, metric={"category": "Diversity", "name": "entropyness"},
               time_span={"kind": "Duration", "expression": "whenever"})], {"V3", "V4"}),
    ("V1, V6 and V7", [_hint("texting", "Heartbeat"), _set("level", "Activity"), _feature(3, behavior="ghost")],
     {"V1", "V6", "V7"}),
    ("all eight",
     [_add_sensor("Heartbeat"), _feature(4, time_span=None), _feature(3, metric={"category": "Statistical", "name": "astrology"}),
      _feature(2, time_span={"kind": "Duration", "expression": "sometimes"}), _model(name="Transformer"),
      _set("level", "Category"), _feature(1, behavior="ghost"), _drop_sensor("Gyroscope")],
     {"V1", "V2", "V3", "V4", "V5", "V6", "V7", "V8"}),
]


def adversarial_case(mutations) -> SensingStrategy:
    from mobisense.codec import decode_document

    doc = _doc(shipped_strategy())
    for mutate in mutations:
        mutate(doc)
    strategy, diagnostics = decode_document(doc)
    assert strategy is not None, diagnostics
    return strategy
