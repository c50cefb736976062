"""Behavior patterns under the shared-argument closure constraint.

A pattern is a non-empty set of event types together with every argument
adjacent to all of them. Any such event set is a pattern, so the family only
grows as the graph grows. Enumerating all subsets is exponential; subsets
are capped at ``k_max`` event types.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

from .graph import BehaviorGraph, GraphDelta

DEFAULT_K_MAX = 3


@dataclass(frozen=True)
class Pattern:
    events: tuple       # sorted event ids
    args: frozenset     # shared-argument closure


class PatternSet:
    """Mutable map ``event tuple -> closure set``; keys iterate in sorted order."""

    def __init__(self):
        self._closures: dict = {}

    def __len__(self) -> int:
        return len(self._closures)

    def __contains__(self, key) -> bool:
        return key in self._closures

    def __getitem__(self, key) -> Pattern:
        return Pattern(key, frozenset(self._closures[key]))

    def __eq__(self, other) -> bool:
        return isinstance(other, PatternSet) and self._closures == other._closures

    def closure(self, key) -> set:
        return self._closures[key]

    def keys(self) -> list:
        return sorted(self._closures)

    def patterns(self) -> list:
        return [self[k] for k in self.keys()]

    def restricted(self, k: int) -> "PatternSet":
        out = PatternSet()
        out._closures = {key: set(c) for key, c in self._closures.items() if len(key) <= k}
        return out

    def as_dict(self) -> dict:
        return {k: frozenset(c) for k, c in self._closures.items()}


def _closure(g: BehaviorGraph, events) -> set:
    sets = sorted((g.event_adj[e] for e in events), key=len)
    out = set(sets[0])
    for s in sets[1:]:
        out &= s
        if not out:
            break
    return out


def extract_patterns(g: BehaviorGraph, k_max: int = DEFAULT_K_MAX) -> PatternSet:
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    ps = PatternSet()
    events = sorted(g.event_adj)
    for size in range(1, min(k_max, len(events)) + 1):
        for key in combinations(events, size):
            ps._closures[key] = _closure(g, key)
    return ps


def update_patterns(ps: PatternSet, g: BehaviorGraph, delta: GraphDelta,
                    k_max: int = DEFAULT_K_MAX) -> set:
    """Bring ``ps`` up to date with ``g`` after ``delta`` was applied, in place.

    Returns the keys of the patterns that were created or whose closure grew.
    """
    changed = set()
    closures = ps._closures
    new_events = set(delta.new_events)
    if new_events:
        old = sorted(set(g.event_adj) - new_events)
        fresh = sorted(new_events)
        for i, e in enumerate(fresh):
            # subsets whose smallest new member is e; earlier new events are excluded
            pool = sorted(old + fresh[i + 1:])
            for size in range(0, min(k_max - 1, len(pool)) + 1):
                for rest in combinations(pool, size):
                    key = tuple(sorted((e,) + rest))
                    closures[key] = _closure(g, key)
                    changed.add(key)
    for e, a in delta.new_edges:
        others = sorted(g.arg_adj[a] - {e})
        for size in range(0, min(k_max - 1, len(others)) + 1):
            for rest in combinations(others, size):
                key = tuple(sorted((e,) + rest))
                c = closures[key]
                if a not in c:
                    c.add(a)
                    changed.add(key)
    return changed


def oracle_extract(g: BehaviorGraph) -> PatternSet:
    """All non-empty event subsets, closure found by scanning every argument."""
    events = sorted(g.event_adj)
    if len(events) > 12:
        raise ValueError("oracle_extract enumerates 2^n subsets; n must be <= 12")
    ps = PatternSet()
    for mask in range(1, 1 << len(events)):
        key = tuple(e for i, e in enumerate(events) if mask >> i & 1)
        ps._closures[key] = {a for a, evs in g.arg_adj.items() if all(e in evs for e in key)}
    return ps
