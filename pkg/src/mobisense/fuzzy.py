"""Edit-distance helpers for catching spelling drift in model output."""

from __future__ import annotations

from collections.abc import Iterable

MAX_SUGGESTION_DISTANCE = 2
MAX_SUGGESTIONS = 3


def normalize_name(text: str) -> str:
    return " ".join(text.split()).casefold()


def levenshtein(a: str, b: str) -> int:
    """Return the Levenshtein distance between ``a`` and ``b``."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        current = [i]
        for j, cb in enumerate(b, 1):
            current.append(
                min(
                    previous[j] + 1,
                    current[j - 1] + 1,
                    previous[j - 1] + (ca != cb),
                )
            )
        previous = current
    return previous[-1]


def name_distance(query: str, name: str) -> int:
    """Distance from ``query`` to ``name`` or to any single word of it.

    Word-level matching lets "entrpy" reach "Shannon entropy".
    """
    q = normalize_name(query)
    n = normalize_name(name)
    best = levenshtein(q, n)
    words = n.replace("/", " ").split()
    if len(words) > 1:
        best = min(best, min(levenshtein(q, w) for w in words))
    return best


def suggest(
    query: str,
    candidates: Iterable[tuple[str, str]],
    max_distance: int = MAX_SUGGESTION_DISTANCE,
    limit: int = MAX_SUGGESTIONS,
) -> list[str]:
    """Rank canonical names by closeness to ``query``.

    ``candidates`` yields ``(spelling, canonical_name)`` pairs, so aliases can
    point at their canonical name.  Ties keep declaration order.
    """
    distance: dict[str, int] = {}
    first_seen: dict[str, int] = {}
    for order, (spelling, canonical) in enumerate(candidates):
        first_seen.setdefault(canonical, order)
        d = name_distance(query, spelling)
        if d <= max_distance and d < distance.get(canonical, max_distance + 1):
            distance[canonical] = d
    ranked = sorted(distance, key=lambda name: (distance[name], first_seen[name]))
    return ranked[:limit]


def closest_exact(
    query: str, candidates: Iterable[tuple[str, str]]
) -> tuple[int, list[str]]:
    """Whole-name distance to the nearest candidates.

    Returns the minimum distance and every canonical name reaching it.
    """
    q = normalize_name(query)
    best_d: int | None = None
    names: list[str] = []
    for spelling, canonical in candidates:
        d = levenshtein(q, normalize_name(spelling))
        if best_d is None or d < best_d:
            best_d, names = d, [canonical]
        elif d == best_d and canonical not in names:
            names.append(canonical)
    return (best_d if best_d is not None else 10**9), names
