"""Four-level behaviour hierarchy: Context < Activity < Category < Trait.

A :class:`BehaviorDecomposition` links a research objective (the root) down
to context-level behaviours that a phone can observe directly.  Edges always
point from a coarser level to a strictly finer one; levels may be skipped.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from enum import Enum

from .fuzzy import normalize_name
from .knowledge_base import KnowledgeBase, lookup_sensor


class BehaviorLevel(str, Enum):
    CONTEXT = "Context"
    ACTIVITY = "Activity"
    CATEGORY = "Category"
    TRAIT = "Trait"


_RANKS = {level: rank for rank, level in enumerate(BehaviorLevel)}


def level_rank(level: BehaviorLevel | str) -> int:
    """Context=0, Activity=1, Category=2, Trait=3."""
    return _RANKS[BehaviorLevel(level)]


class DecompositionError(ValueError):
    """The decomposition is not even structurally well formed."""


@dataclass(frozen=True)
class BehaviorNode:
    id: str
    label: str
    level: BehaviorLevel
    sensor_hints: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.id.strip():
            raise ValueError("behavior node id must be non-empty")
        if not self.label.strip():
            raise ValueError(f"behavior node {self.id!r} has an empty label")
        object.__setattr__(self, "level", BehaviorLevel(self.level))
        object.__setattr__(self, "sensor_hints", tuple(self.sensor_hints))
        if self.sensor_hints and self.level is not BehaviorLevel.CONTEXT:
            raise ValueError(
                f"behavior node {self.id!r} is {self.level.value}-level; "
                "only Context nodes may carry sensor hints"
            )


@dataclass(frozen=True)
class BehaviorDecomposition:
    root_id: str
    nodes: tuple[BehaviorNode, ...]
    edges: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))

    @property
    def root(self) -> BehaviorNode:
        return self.node(self.root_id)

    def node(self, node_id: str) -> BehaviorNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def get(self, node_id: str) -> BehaviorNode | None:
        for n in self.nodes:
            if n.id == node_id:
                return n
        return None

    def children(self, node_id: str) -> list[str]:
        return [c for p, c in self.edges if p == node_id]

    def descendants(self, node_id: str) -> list[str]:
        """Ids reachable from ``node_id`` (excluding itself), cycle-safe."""
        adjacency = _adjacency(self)
        seen: list[str] = []
        stack = list(reversed(adjacency[node_id]))
        while stack:
            current = stack.pop()
            if current in seen or current == node_id:
                continue
            seen.append(current)
            stack.extend(reversed(adjacency[current]))
        return seen

    def find_by_label(self, label: str) -> BehaviorNode | None:
        key = normalize_name(label)
        for n in self.nodes:
            if normalize_name(n.label) == key:
                return n
        return None


@dataclass(frozen=True)
class DecompositionViolation:
    code: str  # cycle | level-inversion | non-context-leaf | unknown-sensor-hint | unreachable-node
    subject: str
    detail: str


def _adjacency(decomp: BehaviorDecomposition) -> dict[str, list[str]]:
    adjacency: dict[str, list[str]] = defaultdict(list)
    for parent, child in decomp.edges:
        if child not in adjacency[parent]:
            adjacency[parent].append(child)
    return adjacency


def check_structure(decomp: BehaviorDecomposition) -> None:
    """Raise :class:`DecompositionError` for duplicate ids or dangling references."""
    ids = [n.id for n in decomp.nodes]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise DecompositionError(f"duplicate behavior node ids: {', '.join(dupes)}")
    known = set(ids)
    if decomp.root_id not in known:
        raise DecompositionError(f"root {decomp.root_id!r} is not a declared node")
    for parent, child in decomp.edges:
        for end in (parent, child):
            if end not in known:
                raise DecompositionError(f"edge {parent!r} -> {child!r} references unknown node {end!r}")


def _find_cycles(decomp: BehaviorDecomposition) -> list[str]:
    """Ids of nodes that start a back edge in a depth-first walk."""
    adjacency = _adjacency(decomp)
    color = {n.id: 0 for n in decomp.nodes}  # 0 new, 1 on stack, 2 done
    offenders: list[str] = []

    for start in (n.id for n in decomp.nodes):
        if color[start]:
            continue
        stack = [(start, iter(adjacency[start]))]
        color[start] = 1
        while stack:
            node, children = stack[-1]
            child = next(children, None)
            if child is None:
                color[node] = 2
                stack.pop()
            elif color[child] == 1:
                if node not in offenders:
                    offenders.append(node)
            elif color[child] == 0:
                color[child] = 1
                stack.append((child, iter(adjacency[child])))
    return offenders


def validate_decomposition(
    decomp: BehaviorDecomposition, kb: KnowledgeBase
) -> list[DecompositionViolation]:
    """Check level order, leaves, reachability, and sensor hints.

    Every problem is reported; an empty list means the decomposition is valid.
    Duplicate ids or dangling edges raise :class:`DecompositionError` instead.
    """
    check_structure(decomp)
    violations: list[DecompositionViolation] = []
    by_id = {n.id: n for n in decomp.nodes}

    for node_id in _find_cycles(decomp):
        violations.append(DecompositionViolation("cycle", node_id, f"{node_id!r} lies on a cycle"))

    seen_edges: set[tuple[str, str]] = set()
    for parent, child in decomp.edges:
        if (parent, child) in seen_edges:
            continue
        seen_edges.add((parent, child))
        p, c = by_id[parent], by_id[child]
        if level_rank(c.level) >= level_rank(p.level):
            violations.append(
                DecompositionViolation(
                    "level-inversion",
                    parent,
                    f"edge {parent!r} ({p.level.value}) -> {child!r} ({c.level.value}) "
                    "must go from a coarser to a strictly finer level",
                )
            )

    parents = {p for p, _ in decomp.edges}
    for node in decomp.nodes:
        if node.id not in parents and node.level is not BehaviorLevel.CONTEXT:
            violations.append(
                DecompositionViolation(
                    "non-context-leaf",
                    node.id,
                    f"leaf {node.id!r} is {node.level.value}-level; leaves must be Context behaviours",
                )
            )

    for node in decomp.nodes:
        for hint in node.sensor_hints:
            if not lookup_sensor(kb, hint):
                violations.append(
                    DecompositionViolation(
                        "unknown-sensor-hint", hint, f"node {node.id!r} hints unknown sensor {hint!r}"
                    )
                )

    reachable = {decomp.root_id, *decomp.descendants(decomp.root_id)}
    for node in decomp.nodes:
        if node.id not in reachable:
            violations.append(
                DecompositionViolation(
                    "unreachable-node", node.id, f"{node.id!r} is not reachable from root {decomp.root_id!r}"
                )
            )
    return violations


def context_leaves(decomp: BehaviorDecomposition) -> list[BehaviorNode]:
    """Nodes without children, in declaration order."""
    parents = {p for p, _ in decomp.edges}
    return [n for n in decomp.nodes if n.id not in parents]
