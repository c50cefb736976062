"""End-to-end training with the pairwise squared-hinge AUC surrogate.

For benign scores ``B`` and malicious scores ``M``::

    L = 1/(|B||M|) * sum_b sum_m max(0, s_b - s_m + margin)^2

which upper-bounds ``1 - AUC`` for ``margin = 1``. :func:`auc_loss_naive`
enumerates pairs; :func:`auc_loss_fast` sorts and uses prefix sums.
Gradients are propagated by hand through the head, the pooling and the
``|W|`` reparameterization (``d|w|/dw = sign(w)``, with ``sign(0) = 0``).
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from os import PathLike
from typing import Sequence, Union

import numpy as np
from scipy.stats import rankdata

from .classifiers import ACTIVATIONS, Model, ModelConfig, fold_dense, head_forward
from .features import PreparedLog, default_groups, embed_rows
from .logmodel import BENIGN, MALWARE, EventAlphabet, Log, build_vocabulary

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# loss kernels


def _split(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    return scores[labels == BENIGN], scores[labels == MALWARE]


def auc_loss_naive(B, M, margin: float = 1.0, grad: bool = False):
    """Pairwise enumeration, chunked over ``B``. Optionally returns score gradients."""
    B = np.asarray(B, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    if len(B) == 0 or len(M) == 0:
        raise ValueError("need at least one benign and one malicious score")
    norm = 1.0 / (len(B) * len(M))
    total = 0.0
    gB = np.zeros_like(B)
    gM = np.zeros_like(M)
    step = max(1, 2_000_000 // len(M))
    for i in range(0, len(B), step):
        h = np.maximum(0.0, B[i:i + step, None] - M[None, :] + margin)
        total += np.sum(h * h)
        if grad:
            gB[i:i + step] = 2.0 * norm * h.sum(axis=1)
            gM -= 2.0 * norm * h.sum(axis=0)
    if grad:
        return total * norm, gB, gM
    return total * norm


def auc_loss_fast(B, M, margin: float = 1.0):
    """Same loss in O(n log n); returns ``(loss, dL/dB, dL/dM)``.

    With ``M`` sorted, the malicious scores active for ``s_b`` are the prefix
    ``s_m < s_b + margin``, and ``sum (x - s_m)^2`` expands into prefix sums
    of ``s_m`` and ``s_m^2``. Scores are centred first so the expansion does
    not cancel catastrophically for large common offsets.
    """
    B = np.asarray(B, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    nb, nm = len(B), len(M)
    if nb == 0 or nm == 0:
        raise ValueError("need at least one benign and one malicious score")
    norm = 1.0 / (nb * nm)
    ref = 0.5 * (np.median(B) + np.median(M))
    x = B - ref + margin
    m = M - ref

    ms = np.sort(m)
    p1 = np.concatenate([[0.0], np.cumsum(ms)])
    p2 = np.concatenate([[0.0], np.cumsum(ms * ms)])
    c = np.searchsorted(ms, x, side="left")
    s1, s2 = p1[c], p2[c]
    loss = np.sum(c * x * x - 2.0 * x * s1 + s2) * norm
    gB = 2.0 * norm * (c * x - s1)

    xs = np.sort(x)
    q1 = np.concatenate([np.cumsum(xs[::-1])[::-1], [0.0]])
    d = np.searchsorted(xs, m, side="right")
    gM = -2.0 * norm * (q1[d] - (nb - d) * m)
    return max(loss, 0.0), gB, gM


def auc_roc(scores, labels) -> float:
    """Rank-based AUC-ROC; tied scores count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == MALWARE
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def batch_loss(scores, labels, margin: float = 1.0):
    """Loss and per-score gradient for a labelled batch."""
    labels = np.asarray(labels)
    B, M = _split(scores, labels)
    loss, gB, gM = auc_loss_fast(B, M, margin)
    g = np.empty(len(labels))
    g[labels == BENIGN] = gB
    g[labels == MALWARE] = gM
    return loss, g


# ---------------------------------------------------------------------------
# forward with caches, and backward


@dataclass
class ForwardCache:
    pooled_idx: list          # per log: {mode: row index per coordinate} or None if empty
    n_patterns: list
    features: np.ndarray
    head: dict


def forward(model: Model, batch: Sequence[PreparedLog]):
    """Scores of ``batch`` plus everything :func:`backward` needs."""
    c = model.config
    H = c.embed_dim
    WT, bt = model.embedding_tables()
    F = np.empty((len(batch), model.feature_dim))
    idx_list, n_list = [], []
    width = H * len(c.pooling)
    for i, p in enumerate(batch):
        E = embed_rows(p.C, WT, bt)
        n_list.append(E.shape[0])
        if E.shape[0] == 0:
            F[i, :width] = 0.0
            idx_list.append(None)
        else:
            blocks, idx = [], {}
            for mode in c.pooling:
                if mode == "max":
                    j = E.argmax(axis=0)
                    blocks.append(E[j, np.arange(H)])
                    idx["max"] = j
                elif mode == "min":
                    j = E.argmin(axis=0)
                    blocks.append(E[j, np.arange(H)])
                    idx["min"] = j
                else:
                    blocks.append(E.mean(axis=0))
            F[i, :width] = np.concatenate(blocks)
            idx_list.append(idx)
        F[i, width:] = model.transform_counts(p.counts)
    s, head = head_forward(model, F)
    return s, ForwardCache(idx_list, n_list, F, head)


def _signed(model: Model, name: str, g: np.ndarray) -> np.ndarray:
    if model.config.monotone:
        return g * np.sign(model.params[name])
    return g


def backward(model: Model, batch: Sequence[PreparedLog], cache: ForwardCache,
             dscores: np.ndarray) -> dict:
    """Gradients of a scalar loss w.r.t. every parameter, given dL/dscore."""
    c = model.config
    grads = {}
    dS = np.asarray(dscores, dtype=np.float64)
    hc = cache.head
    if c.classifier == "minmax":
        K, J = c.minmax_blocks, c.minmax_neurons
        X = hc["X"]
        N = len(X)
        dZ = np.zeros((N, K * J))
        rows = np.arange(N)
        k = hc["kmax"]
        j = hc["jmin"][rows, k]
        dZ[rows, k * J + j] = dS
        A = model._w("head.W")
        grads["head.W"] = _signed(model, "head.W", dZ.T @ X)
        grads["head.b"] = dZ.sum(axis=0)
        dF = dZ @ A
    else:
        dy = dS[:, None]
        acts = model.head_activations()
        for i in range(len(acts) - 1, -1, -1):
            h_in, z, y = hc["layers"][i]
            dz = dy * ACTIVATIONS[acts[i]][1](z, y)
            name = f"head.{i}.W"
            grads[name] = _signed(model, name, dz.T @ h_in)
            grads[f"head.{i}.b"] = dz.sum(axis=0)
            dy = dz @ model._w(name)
        dF = dy

    H = c.embed_dim
    D = model.input_dim
    dWT = np.zeros((D, H))
    dbt = np.zeros(H)
    cols_all, h_all, vals_all = [], [], []
    hidx = np.arange(H)
    for i, p in enumerate(batch):
        idx = cache.pooled_idx[i]
        if idx is None:
            continue
        off = 0
        for mode in c.pooling:
            g = dF[i, off:off + H]
            off += H
            if mode in ("max", "min"):
                sel = p.C[idx[mode]]
                counts = np.diff(sel.indptr)
                hh = np.repeat(hidx, counts)
                cols_all.append(sel.indices)
                h_all.append(hh)
                vals_all.append(sel.data * g[hh])
                dbt += g
            else:
                n = cache.n_patterns[i]
                colsum = np.asarray(p.C.sum(axis=0)).ravel() / n
                nz = np.nonzero(colsum)[0]
                dWT[nz] += colsum[nz, None] * g[None, :]
                dbt += g
    if cols_all:
        np.add.at(dWT, (np.concatenate(cols_all), np.concatenate(h_all)), np.concatenate(vals_all))
    grads["emb.W"] = _signed(model, "emb.W", dWT.T)
    grads["emb.b"] = _signed(model, "emb.b", dbt)
    return grads


def loss_and_grads(model: Model, batch: Sequence[PreparedLog], labels, margin: float = 1.0):
    s, cache = forward(model, batch)
    loss, ds = batch_loss(s, labels, margin)
    return loss, backward(model, batch, cache, ds)


# ---------------------------------------------------------------------------
# finite-difference check


def _routing(model: Model, batch, labels, margin) -> tuple:
    """Discrete choices of the forward pass; a change marks a kink."""
    s, cache = forward(model, batch)
    parts = []
    for idx in cache.pooled_idx:
        if idx is not None:
            parts.extend(v.tobytes() for _, v in sorted(idx.items()))
    h = cache.head
    if "jmin" in h:
        parts += [h["jmin"].tobytes(), h["kmax"].tobytes()]
    else:
        parts += [(z > 0).tobytes() for _, z, _ in h["layers"]]
    labels = np.asarray(labels)
    B, M = _split(s, labels)
    parts.append((B[:, None] - M[None, :] + margin > 0).tobytes())
    return tuple(parts)


def grad_check(model: Model, batch: Sequence[PreparedLog], labels, eps: float = 1e-5,
               n_coords: int = 40, seed: int = 0, margin: float = 1.0,
               max_tries: int = 20, floor: float = 1e-7) -> float:
    """Max relative error of :func:`backward` against central differences.

    Checks ``n_coords`` coordinates per tensor (half of them drawn from
    coordinates with nonzero analytic gradient). Magnitude-parameterized
    entries within ``4 eps`` of zero are first moved off the ``|w|`` kink.
    If any perturbation crosses a pooling, min-max, activation or hinge
    kink, the parameters are jittered slightly and the check restarts, so
    ``model.params`` may be modified. Relative error is
    ``|a - n| / max(|a|, |n|, floor)``, where ``floor`` is raised to
    ``1e6`` times the rounding noise of the difference quotient
    (``spacing(L) / (2 eps)``): below that, a numerical derivative cannot be
    told apart from zero.
    """
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels)

    def loss_at():
        s, _ = forward(model, batch)
        return batch_loss(s, labels, margin)[0]

    abs_params = set()
    if model.config.monotone:
        abs_params = {n for n in model.params if n.endswith(".W")} | {"emb.b"}

    _off_zero(model, abs_params, 4 * eps, rng)
    for _ in range(max_tries):
        base = _routing(model, batch, labels, margin)
        L, grads = loss_and_grads(model, batch, labels, margin)
        denom_floor = max(floor, 1e6 * np.spacing(abs(L)) / (2 * eps))
        worst = 0.0
        ok = True
        for name, g in grads.items():
            w = model.params[name]
            flat = w.reshape(-1)
            gflat = g.reshape(-1)
            nz = np.flatnonzero(gflat)
            picks = list(rng.choice(nz, size=min(n_coords // 2, len(nz)), replace=False)) if len(nz) else []
            picks += list(rng.choice(flat.size, size=min(n_coords - len(picks), flat.size), replace=False))
            for j in picks:
                old = flat[j]
                if name in abs_params and abs(old) <= 2 * eps:
                    ok = False
                    break
                flat[j] = old + eps
                if _routing(model, batch, labels, margin) != base:
                    ok = False
                lp = loss_at()
                flat[j] = old - eps
                if _routing(model, batch, labels, margin) != base:
                    ok = False
                lm = loss_at()
                flat[j] = old
                if not ok:
                    break
                num = (lp - lm) / (2 * eps)
                a = gflat[j]
                err = abs(a - num) / max(abs(a), abs(num), denom_floor)
                worst = max(worst, err)
            if not ok:
                break
        if ok:
            return worst
        for name, w in model.params.items():
            model.params[name] = w + rng.normal(0.0, 1e-2 * (np.std(w) or 1.0), size=w.shape)
        _off_zero(model, abs_params, 4 * eps, rng)
    raise RuntimeError("could not find a kink-free parameter point")


def _off_zero(model: Model, names, tol: float, rng: np.random.Generator) -> None:
    """Push entries with ``|w| <= tol`` to a random sign times ``U(1e-3, 1e-2)``."""
    for name in names:
        w = model.params[name]
        near = np.abs(w) <= tol
        if near.any():
            w = w.copy()
            w[near] = rng.choice([-1.0, 1.0], size=near.sum()) * rng.uniform(1e-3, 1e-2, size=near.sum())
            model.params[name] = w


# ---------------------------------------------------------------------------
# optimisation


class Adam:
    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr = np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for k in params:
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            params[k] = params[k] - self.lr * corr * self.m[k] / (np.sqrt(self.v[k]) + self.eps)


class SGD:
    def __init__(self, params: dict, lr=1e-2):
        self.lr = lr

    def step(self, params: dict, grads: dict) -> None:
        for k in params:
            params[k] = params[k] - self.lr * grads[k]


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    batch_size: int = 64
    epochs: int = 20
    lr: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    margin: float = 1.0
    val_fraction: float = 0.2
    fpr: float = 0.01
    keep_best: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        model = ModelConfig.from_dict(d.pop("model", {}))
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(model=model, **d)


def stratified_batches(labels, batch_size: int, rng: np.random.Generator) -> list:
    """Shuffle each class and deal it across batches so every batch has both."""
    labels = np.asarray(labels)
    ben = rng.permutation(np.flatnonzero(labels == BENIGN))
    mal = rng.permutation(np.flatnonzero(labels == MALWARE))
    if len(ben) == 0 or len(mal) == 0:
        raise ValueError("training data needs both classes")
    n = max(1, min(int(np.ceil(len(labels) / batch_size)), len(ben), len(mal)))
    return [np.concatenate([b, m]) for b, m in zip(np.array_split(ben, n), np.array_split(mal, n))]


def calibrate_threshold(scores, labels, fpr: float) -> float:
    """Smallest score such that at most ``fpr`` of benign scores lie strictly above it."""
    B, _ = _split(scores, labels)
    if len(B) == 0:
        return float("nan")
    return float(np.quantile(B, 1.0 - fpr, method="higher"))


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_auc: float
    val_auc: float
    wall_time: float


def new_model(logs: Sequence[Log], alphabet: EventAlphabet, config: ModelConfig) -> Model:
    """Vocabulary and counter groups from training logs; parameters left empty."""
    vocab = build_vocabulary(logs, config.vocab_size)
    groups = default_groups((vocab.encode(lg) for lg in logs), alphabet, config.n_groups)
    return Model(config, alphabet, vocab, groups)


def init_model(model: Model, sample: Sequence[PreparedLog], rng: np.random.Generator) -> None:
    """Glorot init, then shift head biases so pre-activations on ``sample`` are centred.

    Every head weight is a nonnegative magnitude in monotone mode, so with
    zero biases all pre-activations start large and positive and saturate
    tanh; centring them keeps the head trainable and does not affect
    monotonicity (biases are free).
    """
    model.init_params(rng)
    if not sample:
        return
    F = model.features(sample)
    c = model.config
    if c.classifier == "minmax":
        Z = head_forward(model, F)[1]["Z"]
        model.params["head.b"] = -Z.mean(axis=0) + rng.normal(0, 0.1, Z.shape[1])
        return
    h = F
    for i, act in enumerate(model.head_activations()):
        z = fold_dense(h, model._w(f"head.{i}.W"), np.zeros(model.params[f"head.{i}.b"].shape))
        sd = z.std(axis=0)
        scale = np.where(sd > 0, 1.0 / np.maximum(sd, 1e-12), 1.0)
        model.params[f"head.{i}.W"] *= scale[:, None]
        z = z * scale
        model.params[f"head.{i}.b"] = -z.mean(axis=0)
        h = ACTIVATIONS[act][0](z - z.mean(axis=0))


def train(model: Model, train_set: Sequence[PreparedLog], train_labels,
          config: TrainConfig, val_set: Sequence[PreparedLog] = (), val_labels=(),
          history_path: Union[str, PathLike, None] = None) -> list:
    """Optimise ``model.params`` in place; returns per-epoch records.

    Deterministic for a fixed ``config.seed``. With ``keep_best`` the
    parameters of the epoch with the best validation AUC are kept.
    """
    rng = np.random.default_rng(config.seed)
    train_labels = np.asarray(train_labels)
    val_labels = np.asarray(val_labels)
    if not model.params:
        sample_idx = rng.choice(len(train_set), size=min(256, len(train_set)), replace=False)
        init_model(model, [train_set[i] for i in sample_idx], rng)
    opt = (Adam(model.params, lr=config.lr) if config.optimizer == "adam"
           else SGD(model.params, lr=config.lr))
    has_val = len(val_set) > 0 and len(set(val_labels.tolist())) == 2
    history = []
    best = (-np.inf, None)
    t0 = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        losses = []
        for idx in stratified_batches(train_labels, config.batch_size, rng):
            batch = [train_set[i] for i in idx]
            loss, grads = loss_and_grads(model, batch, train_labels[idx], config.margin)
            opt.step(model.params, grads)
            losses.append(loss)
        tr_auc = auc_roc(model.score(train_set), train_labels)
        va_auc = auc_roc(model.score(val_set), val_labels) if has_val else float("nan")
        rec = EpochRecord(epoch, float(np.mean(losses)), tr_auc, va_auc, time.perf_counter() - t0)
        history.append(rec)
        log.info("epoch %d loss %.4f train_auc %.4f val_auc %.4f", epoch, rec.train_loss,
                 rec.train_auc, rec.val_auc)
        key = va_auc if has_val else tr_auc
        if config.keep_best and key > best[0]:
            best = (key, {k: v.copy() for k, v in model.params.items()})
    if config.keep_best and best[1] is not None:
        model.params = best[1]
    if has_val:
        model.threshold = calibrate_threshold(model.score(val_set), val_labels, config.fpr)
    if history_path is not None:
        write_history(history, history_path)
    return history


def write_history(history: Sequence[EpochRecord], path: Union[str, PathLike]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "train_loss", "train_auc", "val_auc", "wall_time"])
        for r in history:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.train_auc), repr(r.val_auc),
                        f"{r.wall_time:.3f}"])


def fit(logs: Sequence[Log], alphabet: EventAlphabet, config: TrainConfig,
        history_path: Union[str, PathLike, None] = None):
    """Build vocabulary/groups, split off validation data, train. Returns ``(model, history)``."""
    rng = np.random.default_rng(config.seed)
    labels = np.array([lg.label for lg in logs])
    if any(lb not in (BENIGN, MALWARE) for lb in labels):
        raise ValueError("every training log needs a label")
    val_mask = np.zeros(len(logs), dtype=bool)
    if config.val_fraction > 0:
        for cls in (BENIGN, MALWARE):
            idx = rng.permutation(np.flatnonzero(labels == cls))
            val_mask[idx[:int(round(config.val_fraction * len(idx)))]] = True
    tr_logs = [lg for lg, v in zip(logs, val_mask) if not v]
    va_logs = [lg for lg, v in zip(logs, val_mask) if v]
    model = new_model(tr_logs, alphabet, config.model)
    tr = [model.prepare(lg) for lg in tr_logs]
    va = [model.prepare(lg) for lg in va_logs]
    history = train(model, tr, labels[~val_mask], config, va, labels[val_mask], history_path)
    return model, history
