"""From patterns to the classifier input vector.

Each pattern becomes a count vector over ``[event types | tokens | OOV]``.
Patterns are embedded with a linear layer (``|W|`` and ``|b|`` in monotone
mode), pooled across patterns, and concatenated with per-group event
counters.

Evaluation order is fixed so that monotonicity holds bit-exactly: a CSR
count matrix with sorted column indices times a dense matrix accumulates
each output row left to right over the row's nonzeros. Growing a pattern
inserts nonnegative terms or enlarges counts, and every step of that fold
is monotone in IEEE arithmetic, so embeddings can only go up.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from os import PathLike
from typing import Iterable, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .graph import add_line, graph_from_log
from .logmodel import EncodedLine, EventAlphabet, LogFormatError
from .patterns import DEFAULT_K_MAX, PatternSet, Pattern, extract_patterns, update_patterns


# ---------------------------------------------------------------------------
# counter groups


class GroupConfig:
    """Named groups of event types; a line counts towards every group holding its type."""

    def __init__(self, names: Sequence[str], members: Sequence[Iterable[int]], n_event_types: int):
        if len(names) != len(members):
            raise ValueError("names and members differ in length")
        self.names = list(names)
        self.members = [frozenset(m) for m in members]
        self.n_event_types = n_event_types
        self.matrix = np.zeros((n_event_types, len(self.names)))
        for j, m in enumerate(self.members):
            for e in m:
                if not 0 <= e < n_event_types:
                    raise ValueError(f"group {self.names[j]!r}: event id {e} out of range")
                self.matrix[e, j] = 1.0

    def __len__(self) -> int:
        return len(self.names)

    def __eq__(self, other) -> bool:
        return (isinstance(other, GroupConfig) and self.names == other.names
                and self.members == other.members and self.n_event_types == other.n_event_types)

    def to_json(self, alphabet: EventAlphabet) -> dict:
        return {n: sorted(alphabet.names[e] for e in m) for n, m in zip(self.names, self.members)}

    @classmethod
    def from_json(cls, obj: dict, alphabet: EventAlphabet) -> "GroupConfig":
        if not isinstance(obj, dict):
            raise LogFormatError("group config must be a JSON object of name -> [event type]")
        return cls(list(obj), [[alphabet.id(n) for n in v] for v in obj.values()], len(alphabet))

    @classmethod
    def load(cls, path: Union[str, PathLike], alphabet: EventAlphabet) -> "GroupConfig":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(json.load(f), alphabet)

    def save(self, path: Union[str, PathLike], alphabet: EventAlphabet) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(alphabet), f, indent=1)


def default_groups(corpus: Iterable[Sequence[EncodedLine]], alphabet: EventAlphabet,
                   n_groups: int = 64) -> GroupConfig:
    """One singleton group per event type, the ``n_groups`` most frequent ones."""
    counts = np.zeros(len(alphabet), dtype=np.int64)
    for lines in corpus:
        for line in lines:
            counts[line.event_type] += 1
    order = sorted(range(len(alphabet)), key=lambda e: (-counts[e], e))[:n_groups]
    order = sorted(order)
    return GroupConfig([alphabet.names[e] for e in order], [[e] for e in order], len(alphabet))


def counter_features(lines: Sequence[EncodedLine], groups: GroupConfig) -> np.ndarray:
    hist = np.bincount([ln.event_type for ln in lines], minlength=groups.n_event_types)
    return hist[:groups.n_event_types].astype(np.float64) @ groups.matrix


# ---------------------------------------------------------------------------
# pattern count vectors


def vectorize_pattern(p: Pattern, n_event_types: int, vocab_size: int) -> np.ndarray:
    """Dense count vector of length ``n_event_types + vocab_size + 1``."""
    v = np.zeros(n_event_types + vocab_size + 1)
    for e in p.events:
        v[e] = 1.0
    for a in p.args:
        for t in a:
            v[n_event_types + t] += 1.0
    return v


def count_matrix(closures: Sequence[Iterable], keys: Sequence[tuple],
                 n_event_types: int, vocab_size: int) -> sp.csr_matrix:
    """Stack pattern count vectors as CSR rows with sorted column indices.

    Counts are integers held in float64 and are summed exactly.
    """
    n_rows = len(keys)
    dim = n_event_types + vocab_size + 1
    rows, cols = [], []
    for i, key in enumerate(keys):
        rows.extend([i] * len(key))
        cols.extend(key)
    arg_index: dict = {}
    m_rows, m_cols = [], []
    for i, clo in enumerate(closures):
        for a in clo:
            j = arg_index.get(a)
            if j is None:
                j = arg_index[a] = len(arg_index)
            m_rows.append(i)
            m_cols.append(j)
    if arg_index:
        a_rows, a_cols = [], []
        for a, j in arg_index.items():
            a_rows.extend([j] * len(a))
            a_cols.extend(a)
        ones = np.ones(len(a_rows))
        A = sp.csr_matrix((ones, (a_rows, np.asarray(a_cols) + n_event_types)),
                          shape=(len(arg_index), dim))
        M = sp.csr_matrix((np.ones(len(m_rows)), (m_rows, m_cols)),
                          shape=(n_rows, len(arg_index)))
        T = (M @ A).tocoo()
        rows.extend(T.row.tolist())
        cols.extend(T.col.tolist())
        data = np.concatenate([np.ones(len(rows) - T.nnz), T.data])
    else:
        data = np.ones(len(rows))
    C = sp.csr_matrix((data, (rows, cols)), shape=(n_rows, dim))
    C.sum_duplicates()
    C.sort_indices()
    return C


# ---------------------------------------------------------------------------
# embedding and pooling


def embed(pcv, W: np.ndarray, b: np.ndarray, monotone: bool = True) -> np.ndarray:
    """Embed one count vector (or rows of a count matrix)."""
    Wt, bt = (np.abs(W), np.abs(b)) if monotone else (W, b)
    if sp.issparse(pcv):
        return embed_rows(pcv, np.ascontiguousarray(Wt.T), bt)
    pcv = np.asarray(pcv, dtype=np.float64)
    return embed_rows(sp.csr_matrix(pcv.reshape(1, -1) if pcv.ndim == 1 else pcv),
                      np.ascontiguousarray(Wt.T), bt).reshape(pcv.shape[:-1] + (len(b),))


def embed_rows(C: sp.csr_matrix, WT: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``C @ WT + b`` with the fixed per-row accumulation order."""
    if C.shape[0] == 0:
        return np.zeros((0, WT.shape[1]))
    return np.asarray(C @ WT) + b


POOL_MAX = ("max",)
POOL_ALL = ("min", "max", "avg")


def pool(embedded, modes: Sequence[str] = POOL_MAX, dim: int | None = None) -> np.ndarray:
    """Coordinatewise pooling; each mode contributes one block. Empty input -> zeros."""
    E = np.asarray(embedded, dtype=np.float64)
    if E.size == 0:
        if dim is None:
            dim = E.shape[1] if E.ndim == 2 else 0
        return np.zeros(dim * len(modes))
    out = []
    for m in modes:
        if m == "max":
            out.append(E.max(axis=0))
        elif m == "min":
            out.append(E.min(axis=0))
        elif m == "avg":
            out.append(E.mean(axis=0))
        else:
            raise ValueError(f"unknown pooling mode {m!r}")
    return np.concatenate(out)


# ---------------------------------------------------------------------------
# parameter-independent per-log structures


@dataclass
class PrefixTrace:
    """Every version of every pattern as the log is read line by line.

    Row ``v`` of ``C`` is the count vector pattern ``pattern[v]`` takes on
    after line ``line[v]`` (0-based) and keeps until its next version.
    """
    C: sp.csr_matrix
    line: np.ndarray
    pattern: np.ndarray
    counts: np.ndarray      # (n_lines + 1, n_groups) counters of each prefix


@dataclass
class PreparedLog:
    n_lines: int
    keys: list
    C: sp.csr_matrix        # final pattern count matrix, rows in key order
    counts: np.ndarray      # raw counter features of the whole log
    trace: PrefixTrace | None = None


class Featurizer:
    """Everything between encoded lines and the learned parameters."""

    def __init__(self, n_event_types: int, vocab_size: int, groups: GroupConfig,
                 k_max: int = DEFAULT_K_MAX):
        self.n_event_types = n_event_types
        self.vocab_size = vocab_size
        self.groups = groups
        self.k_max = k_max

    @property
    def input_dim(self) -> int:
        return self.n_event_types + self.vocab_size + 1

    def patterns(self, lines: Sequence[EncodedLine]) -> PatternSet:
        return extract_patterns(graph_from_log(lines), self.k_max)

    def prepare(self, lines: Sequence[EncodedLine], trace: bool = False) -> PreparedLog:
        """Full-log count matrix from scratch, plus the prefix trace if asked."""
        if trace:
            return self._prepare_traced(lines)
        ps = self.patterns(lines)
        keys = ps.keys()
        C = count_matrix([ps.closure(k) for k in keys], keys, self.n_event_types, self.vocab_size)
        return PreparedLog(len(lines), keys, C, counter_features(lines, self.groups))

    def _prepare_traced(self, lines: Sequence[EncodedLine]) -> PreparedLog:
        from .graph import BehaviorGraph
        g = BehaviorGraph()
        ps = PatternSet()
        v_line, v_key, v_clo = [], [], []
        for i, line in enumerate(lines):
            delta = add_line(g, line)
            for key in sorted(update_patterns(ps, g, delta, self.k_max)):
                v_line.append(i)
                v_key.append(key)
                v_clo.append(frozenset(ps.closure(key)))
        keys = ps.keys()
        pos = {k: j for j, k in enumerate(keys)}
        final = [ps.closure(k) for k in keys]
        C = count_matrix(final, keys, self.n_event_types, self.vocab_size)
        Cv = count_matrix(v_clo, v_key, self.n_event_types, self.vocab_size)
        onehot = np.zeros((len(lines) + 1, self.groups.n_event_types))
        for i, line in enumerate(lines):
            onehot[i + 1, line.event_type] = 1.0
        prefix_counts = np.cumsum(onehot, axis=0) @ self.groups.matrix
        tr = PrefixTrace(Cv, np.asarray(v_line, dtype=np.int64),
                         np.asarray([pos[k] for k in v_key], dtype=np.int64), prefix_counts)
        return PreparedLog(len(lines), keys, C, prefix_counts[-1].copy(), tr)


def trace_pooled_max(trace: PrefixTrace, E: np.ndarray, n_lines: int) -> np.ndarray:
    """Max-pooled embedding of every prefix ``1..n_lines`` from version embeddings."""
    H = E.shape[1]
    out = np.empty((n_lines, H))
    if n_lines == 0:
        return out
    starts = np.searchsorted(trace.line, np.arange(n_lines))
    ends = np.searchsorted(trace.line, np.arange(n_lines), side="right")
    cur = np.full(H, -np.inf)
    for k in range(n_lines):
        if ends[k] > starts[k]:
            cur = np.maximum(cur, E[starts[k]:ends[k]].max(axis=0))
        out[k] = cur
    return out


def trace_active_rows(trace: PrefixTrace, n_patterns: int, n_lines: int):
    """Yield, for each prefix ``1..n_lines``, version rows of the live patterns in key order."""
    current = np.full(n_patterns, -1, dtype=np.int64)
    v = 0
    nv = len(trace.line)
    for k in range(n_lines):
        while v < nv and trace.line[v] == k:
            current[trace.pattern[v]] = v
            v += 1
        yield current[current >= 0]
