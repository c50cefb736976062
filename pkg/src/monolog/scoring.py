"""Whole-log, per-prefix and per-line scoring on top of a trained model."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .classifiers import Model
from .logmodel import Log
from .training import auc_roc


def featurize(log: Log, model: Model) -> np.ndarray:
    """Classifier input vector of ``log``, computed from scratch."""
    return model.features([model.prepare(log)])[0]


def prefix_scores(model: Model, log: Log) -> np.ndarray:
    """Scores of prefixes ``0..len(log)`` via the incremental trace."""
    return model.prefix_scores(model.prepare(log, trace=True))


def prefix_scores_from_scratch(model: Model, log: Log) -> np.ndarray:
    """Same as :func:`prefix_scores`, rebuilding graph and patterns per prefix."""
    return model.score([model.prepare(log.prefix(k)) for k in range(len(log) + 1)])


@dataclass
class StreamRow:
    line_index: int     # -1 is the empty log
    score: float
    delta: float


def stream_rows(model: Model, log: Log) -> list:
    """One row per line plus a leading empty-log row, so deltas telescope to the final score."""
    s = prefix_scores(model, log)
    rows = [StreamRow(-1, float(s[0]), float(s[0]))]
    for i in range(1, len(s)):
        rows.append(StreamRow(i - 1, float(s[i]), float(s[i] - s[i - 1])))
    return rows


def explain(model: Model, log: Log, top_k: int = 3, min_fraction: float = 0.1) -> list:
    """Lines with the largest score increase, largest first.

    Only lines whose increase is positive and at least ``min_fraction`` of the
    largest single-line increase are reported; ties keep the earlier line.
    """
    rows = stream_rows(model, log)[1:]
    if not rows:
        return []
    deltas = np.array([r.delta for r in rows])
    peak = deltas.max()
    if peak <= 0:
        return []
    order = sorted(range(len(rows)), key=lambda i: (-deltas[i], i))
    out = []
    for i in order[:top_k]:
        if deltas[i] <= 0 or deltas[i] < min_fraction * peak:
            break
        line = log.lines[i]
        out.append({"line_index": i, "delta": float(deltas[i]), "score": rows[i].score,
                    "event": model.alphabet.names[line.event_type], "args": list(line.args)})
    return out


@dataclass
class EvalReport:
    full_scores: np.ndarray
    realtime_scores: np.ndarray | None
    labels: np.ndarray
    full_auc: float
    realtime_auc: float | None

    def as_dict(self) -> dict:
        return {"n_logs": int(len(self.labels)), "full_auc": self.full_auc,
                "realtime_auc": self.realtime_auc}


def joint_prediction(prefix: np.ndarray) -> float:
    """Maximum over the non-empty prefixes (the empty log only if there are none)."""
    return float(prefix[1:].max()) if len(prefix) > 1 else float(prefix[0])


def evaluate(model: Model, logs: Sequence[Log], mode: str = "both") -> EvalReport:
    """Full-log AUC and, for ``realtime``/``both``, AUC of per-log max prefix scores."""
    if mode not in ("full", "realtime", "both"):
        raise ValueError("mode must be 'full', 'realtime' or 'both'")
    labels = np.array([lg.label for lg in logs])
    want_rt = mode != "full"
    prepared = [model.prepare(lg, trace=want_rt) for lg in logs]
    full = model.score(prepared)
    rt = None
    if want_rt:
        rt = np.array([joint_prediction(model.prefix_scores(p)) for p in prepared])
    full_auc = auc_roc(full, labels)
    rt_auc = auc_roc(rt, labels) if rt is not None else None
    return EvalReport(full, rt, labels, full_auc, rt_auc)
