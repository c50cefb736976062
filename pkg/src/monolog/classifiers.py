"""Scoring heads and the full model container.

Three monotone heads are provided (linear, deep, min-max) plus the
non-monotone baseline, which is the deep head with raw weights fed by
min/max/avg pooling. Monotone heads use ``|W|`` in the forward pass and
only nondecreasing activations, so ``f <= f'`` implies ``s(f) <= s(f')``.

Dense layers accumulate inputs in a fixed left-to-right order instead of
calling BLAS, whose blocking can differ between rows of one batch.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from os import PathLike
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from . import features as ft
from .features import Featurizer, GroupConfig, PreparedLog
from .logmodel import EventAlphabet, Log, TokenizerConfig, Vocabulary

FORMAT_NAME = "monolog-model"
FORMAT_VERSION = "1"

CLASSIFIERS = ("linear", "deep", "minmax")


class ModelFormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# activations


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def _elu_grad(x, y):
    return np.where(x > 0, 1.0, y + 1.0)


ACTIVATIONS = {
    "identity": (lambda x: x, lambda x, y: np.ones_like(x)),
    "tanh": (np.tanh, lambda x, y: 1.0 - y * y),
    "elu": (elu, _elu_grad),
}


def fold_dense(X: np.ndarray, A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``X @ A.T + b``, each output summed as ``b + x0*a0 + x1*a1 + ...``."""
    N = X.shape[0]
    out = np.empty((N, A.shape[0]))
    out[:] = b
    AT = np.ascontiguousarray(A.T)
    for j in range(X.shape[1]):
        out += X[:, j:j + 1] * AT[j]
    return out


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ModelConfig:
    classifier: str = "deep"
    monotone: bool = True
    embed_dim: int = 32
    hidden: tuple = (64, 32, 16, 8)
    activations: tuple = ("tanh", "elu", "elu", "tanh")
    minmax_blocks: int = 10
    minmax_neurons: int = 20
    k_max: int = 3
    vocab_size: int = 2000
    n_groups: int = 64
    counter_transform: str = "log1p"

    def __post_init__(self):
        if self.classifier not in CLASSIFIERS:
            raise ValueError(f"classifier must be one of {CLASSIFIERS}")
        if len(self.hidden) != len(self.activations):
            raise ValueError("hidden and activations differ in length")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        if self.counter_transform not in ("log1p", "identity"):
            raise ValueError("counter_transform must be 'log1p' or 'identity'")

    @property
    def pooling(self) -> tuple:
        return ft.POOL_MAX if self.monotone else ft.POOL_ALL

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["activations"] = list(self.activations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        for k in ("hidden", "activations"):
            if k in d:
                d[k] = tuple(d[k])
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


#: Reference-size layers and vocabulary; fine for experiments, slow on a desk.
LARGE_SCALE = ModelConfig(embed_dim=300, hidden=(600, 300, 100, 50), vocab_size=135_907,
                          n_groups=382)


# ---------------------------------------------------------------------------
# model


@dataclass
class Model:
    config: ModelConfig
    alphabet: EventAlphabet
    vocab: Vocabulary
    groups: GroupConfig
    params: dict = field(default_factory=dict)
    threshold: float | None = None
    version: str = FORMAT_VERSION

    def __post_init__(self):
        self.featurizer = Featurizer(len(self.alphabet), len(self.vocab), self.groups,
                                     self.config.k_max)

    # -- shapes ------------------------------------------------------------

    @property
    def input_dim(self) -> int:
        return self.featurizer.input_dim

    @property
    def feature_dim(self) -> int:
        return self.config.embed_dim * len(self.config.pooling) + len(self.groups)

    def layer_shapes(self) -> list:
        c = self.config
        if c.classifier == "minmax":
            return [("head.W", (c.minmax_blocks * c.minmax_neurons, self.feature_dim)),
                    ("head.b", (c.minmax_blocks * c.minmax_neurons,))]
        sizes = [self.feature_dim] + (list(c.hidden) if c.classifier == "deep" else []) + [1]
        out = []
        for i in range(len(sizes) - 1):
            out.append((f"head.{i}.W", (sizes[i + 1], sizes[i])))
            out.append((f"head.{i}.b", (sizes[i + 1],)))
        return out

    def param_shapes(self) -> list:
        H = self.config.embed_dim
        return [("emb.W", (H, self.input_dim)), ("emb.b", (H,))] + self.layer_shapes()

    def head_activations(self) -> list:
        c = self.config
        if c.classifier == "deep":
            return list(c.activations) + ["identity"]
        return ["identity"]

    def init_params(self, rng: np.random.Generator) -> None:
        """Glorot-uniform weights, zero biases.

        In monotone mode only the magnitude of a weight matters, so the
        effective weights are ``|U(-r, r)|``.
        """
        self.params = {}
        for name, shape in self.param_shapes():
            if len(shape) == 2:
                r = np.sqrt(6.0 / (shape[0] + shape[1]))
                self.params[name] = rng.uniform(-r, r, size=shape)
            else:
                self.params[name] = np.zeros(shape)

    # -- data --------------------------------------------------------------

    def encode(self, log: Log) -> list:
        return self.vocab.encode(log)

    def prepare(self, log: Log, trace: bool = False) -> PreparedLog:
        return self.featurizer.prepare(self.encode(log), trace=trace)

    def _w(self, name: str) -> np.ndarray:
        w = self.params[name]
        return np.abs(w) if self.config.monotone else w

    def embedding_tables(self):
        """(input_dim x H) contiguous effective embedding matrix, effective bias."""
        return np.ascontiguousarray(self._w("emb.W").T), self._w("emb.b")

    def transform_counts(self, counts: np.ndarray) -> np.ndarray:
        if self.config.counter_transform == "log1p":
            return np.log1p(counts)
        return np.asarray(counts, dtype=np.float64)

    # -- forward -----------------------------------------------------------

    def pooled(self, prepared: PreparedLog, WT=None, bt=None) -> np.ndarray:
        if WT is None:
            WT, bt = self.embedding_tables()
        E = ft.embed_rows(prepared.C, WT, bt)
        return ft.pool(E, self.config.pooling, dim=self.config.embed_dim)

    def features(self, batch: Sequence[PreparedLog]) -> np.ndarray:
        WT, bt = self.embedding_tables()
        F = np.empty((len(batch), self.feature_dim))
        for i, p in enumerate(batch):
            F[i] = np.concatenate([self.pooled(p, WT, bt), self.transform_counts(p.counts)])
        return F

    def score_features(self, F: np.ndarray) -> np.ndarray:
        return head_forward(self, np.atleast_2d(F))[0]

    def score(self, batch: Sequence[PreparedLog]) -> np.ndarray:
        if len(batch) == 0:
            return np.zeros(0)
        return self.score_features(self.features(batch))

    def score_log(self, log: Log) -> float:
        return float(self.score([self.prepare(log)])[0])

    def prefix_features(self, prepared: PreparedLog) -> np.ndarray:
        """Feature rows of prefixes ``0..n_lines`` from the incremental trace."""
        tr = prepared.trace
        if tr is None:
            raise ValueError("prepared log has no prefix trace; use prepare(..., trace=True)")
        c = self.config
        n = prepared.n_lines
        WT, bt = self.embedding_tables()
        E = ft.embed_rows(tr.C, WT, bt)
        width = c.embed_dim * len(c.pooling)
        pooled = np.zeros((n + 1, width))
        if c.monotone:
            pooled[1:] = ft.trace_pooled_max(tr, E, n)
        else:
            for k, rows in enumerate(ft.trace_active_rows(tr, len(prepared.keys), n), start=1):
                pooled[k] = ft.pool(E[rows], c.pooling)
        return np.hstack([pooled, self.transform_counts(tr.counts)])

    def prefix_scores(self, prepared: PreparedLog) -> np.ndarray:
        """Scores of prefixes ``0..n_lines``; index 0 is the empty log."""
        return self.score_features(self.prefix_features(prepared))


def head_forward(model: Model, X: np.ndarray):
    """Score rows of ``X``; returns ``(scores, cache)`` for backprop."""
    c = model.config
    if c.classifier == "minmax":
        K, J = c.minmax_blocks, c.minmax_neurons
        Z = fold_dense(X, model._w("head.W"), model.params["head.b"])
        Zr = Z.reshape(len(X), K, J)
        jmin = Zr.argmin(axis=2)
        mins = np.take_along_axis(Zr, jmin[:, :, None], axis=2)[:, :, 0]
        kmax = mins.argmax(axis=1)
        s = mins[np.arange(len(X)), kmax]
        return s, {"X": X, "Z": Z, "jmin": jmin, "kmax": kmax}
    acts = []
    h = X
    for i, act in enumerate(model.head_activations()):
        z = fold_dense(h, model._w(f"head.{i}.W"), model.params[f"head.{i}.b"])
        y = ACTIVATIONS[act][0](z)
        acts.append((h, z, y))
        h = y
    return h[:, 0], {"layers": acts}


# ---------------------------------------------------------------------------
# persistence


def save_model(model: Model, path: Union[str, PathLike]) -> None:
    """Write ``path`` (JSON metadata) and ``path`` with suffix ``.bin`` (tensors).

    The blob is, per tensor in metadata order, a little-endian uint64 element
    count followed by that many little-endian float64 values.
    """
    path = Path(path)
    blob_path = path.with_suffix(".bin")
    names = [n for n, _ in model.param_shapes()]
    meta = {
        "format": FORMAT_NAME,
        "version": model.version,
        "config": model.config.to_dict(),
        "threshold": model.threshold,
        "alphabet": model.alphabet.names,
        "vocab": model.vocab.tokens,
        "tokenizer": model.vocab.tokenizer.to_dict(),
        "groups": model.groups.to_json(model.alphabet),
        "group_order": model.groups.names,
        "tensors": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
        "blob": blob_path.name,
    }
    with open(blob_path, "wb") as f:
        for n in names:
            arr = np.ascontiguousarray(model.params[n], dtype="<f8")
            f.write(struct.pack("<Q", arr.size))
            f.write(arr.tobytes())
    with open(path, "w", encoding="utf-8") as f:
        json.dump(meta, f, ensure_ascii=False, indent=1)


def load_model(path: Union[str, PathLike]) -> Model:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as f:
            meta = json.load(f)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"{path}: not a model file ({e.msg})") from None
    if not isinstance(meta, dict) or meta.get("format") != FORMAT_NAME:
        raise ModelFormatError(f"{path}: not a {FORMAT_NAME} file")
    if meta.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: model version {meta.get('version')!r}, "
                               f"expected {FORMAT_VERSION!r}")
    config = ModelConfig.from_dict(meta["config"])
    alphabet = EventAlphabet(meta["alphabet"])
    vocab = Vocabulary(meta["vocab"], TokenizerConfig.from_dict(meta["tokenizer"]))
    groups_json = {n: meta["groups"][n] for n in meta["group_order"]}
    groups = GroupConfig.from_json(groups_json, alphabet)
    model = Model(config, alphabet, vocab, groups, threshold=meta["threshold"])
    expected = dict(model.param_shapes())
    params = {}
    with open(path.parent / meta["blob"], "rb") as f:
        for t in meta["tensors"]:
            (count,) = struct.unpack("<Q", f.read(8))
            shape = tuple(t["shape"])
            if shape != expected.get(t["name"]) or count != int(np.prod(shape)):
                raise ModelFormatError(f"{path}: tensor {t['name']} has inconsistent shape")
            raw = f.read(8 * count)
            if len(raw) != 8 * count:
                raise ModelFormatError(f"{path}: truncated tensor blob")
            params[t["name"]] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        if f.read(1):
            raise ModelFormatError(f"{path}: trailing bytes in tensor blob")
    if set(params) != set(expected):
        raise ModelFormatError(f"{path}: missing tensors {sorted(set(expected) - set(params))}")
    model.params = params
    return model
