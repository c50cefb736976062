"""Bipartite behavior graph: event types on one side, arguments on the other.

An edge ``(e, a)`` means some line of event type ``e`` carried argument
``a``. The graph only grows; :func:`add_line` reports what was new so the
pattern set can be maintained incrementally.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .logmodel import Argument, EncodedLine


@dataclass
class GraphDelta:
    new_events: list = field(default_factory=list)
    new_args: list = field(default_factory=list)
    new_edges: list = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.new_events or self.new_args or self.new_edges)


@dataclass
class BehaviorGraph:
    event_adj: dict = field(default_factory=dict)   # event id -> set of Argument
    arg_adj: dict = field(default_factory=dict)     # Argument -> set of event ids
    line_count: int = 0

    @property
    def event_nodes(self) -> set:
        return set(self.event_adj)

    @property
    def arg_nodes(self) -> set:
        return set(self.arg_adj)

    @property
    def edges(self) -> set:
        return {(e, a) for e, args in self.event_adj.items() for a in args}

    def neighbors(self, node) -> set:
        if isinstance(node, tuple):
            return self.arg_adj.get(node, set())
        return self.event_adj.get(node, set())

    def copy(self) -> "BehaviorGraph":
        return BehaviorGraph({e: set(s) for e, s in self.event_adj.items()},
                             {a: set(s) for a, s in self.arg_adj.items()},
                             self.line_count)

    def is_subgraph_of(self, other: "BehaviorGraph") -> bool:
        return (self.event_nodes <= other.event_nodes
                and self.arg_nodes <= other.arg_nodes
                and self.edges <= other.edges)


def add_line(g: BehaviorGraph, line: EncodedLine) -> GraphDelta:
    """Grow ``g`` in place with one line and return what was added."""
    delta = GraphDelta()
    e = line.event_type
    g.line_count += 1
    eargs = g.event_adj.get(e)
    if eargs is None:
        eargs = g.event_adj[e] = set()
        delta.new_events.append(e)
    for a in line.arguments:
        if a in eargs:
            continue
        evs = g.arg_adj.get(a)
        if evs is None:
            evs = g.arg_adj[a] = set()
            delta.new_args.append(a)
        evs.add(e)
        eargs.add(a)
        delta.new_edges.append((e, a))
    return delta


def graph_from_log(lines: Iterable[EncodedLine]) -> BehaviorGraph:
    g = BehaviorGraph()
    for line in lines:
        add_line(g, line)
    return g


def _arg_label(a: Argument, vocab=None) -> str:
    if vocab is None:
        return " ".join(map(str, a))
    return " ".join(vocab.tokens[t] if t < len(vocab) else "<OOV>" for t in a)


def to_dot(g: BehaviorGraph, alphabet=None, vocab=None) -> str:
    """Graphviz dump; event nodes are boxes, argument nodes ellipses."""
    out = ["graph behavior {"]
    for e in sorted(g.event_adj):
        label = alphabet.names[e] if alphabet is not None else str(e)
        out.append(f'  e{e} [shape=box, label="{_escape(label)}"];')
    arg_ids = {a: i for i, a in enumerate(sorted(g.arg_adj))}
    for a, i in arg_ids.items():
        out.append(f'  a{i} [label="{_escape(_arg_label(a, vocab))}"];')
    for e in sorted(g.event_adj):
        for a in sorted(g.event_adj[e]):
            out.append(f"  e{e} -- a{arg_ids[a]};")
    out.append("}")
    return "\n".join(out) + "\n"


def _escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')
