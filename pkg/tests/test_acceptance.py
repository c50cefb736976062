"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they
happen; they are also repeated in the terminal summary. The corpus and the
trained models are shared across tests through module-scoped fixtures.
"""
import time

import numpy as np
import pytest

from monolog import datagen
from monolog.classifiers import ModelConfig, load_model, save_model
from monolog.graph import BehaviorGraph, add_line, graph_from_log
from monolog.logmodel import BENIGN, MALWARE, EncodedLine
from monolog.patterns import PatternSet, extract_patterns, oracle_extract, update_patterns
from monolog.scoring import evaluate, explain, prefix_scores_from_scratch, stream_rows
from monolog.training import (TrainConfig, auc_loss_fast, auc_loss_naive, auc_roc, fit,
                              grad_check, init_model, new_model)

RESULTS = {}

TRAIN = {
    "deep": TrainConfig(model=ModelConfig(classifier="deep"), epochs=20, lr=3e-3),
    "linear": TrainConfig(model=ModelConfig(classifier="linear"), epochs=20, lr=1e-2),
    "minmax": TrainConfig(model=ModelConfig(classifier="minmax"), epochs=20, lr=3e-3),
    "baseline": TrainConfig(model=ModelConfig(classifier="deep", monotone=False), epochs=20, lr=3e-3),
}
MONOTONE = ("linear", "deep", "minmax")


def record(n, ok, text):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d}: {text}"
    RESULTS[n] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def corpus():
    return datagen.generate(datagen.GenConfig())


@pytest.fixture(scope="module")
def trained(corpus):
    logs = [s.log for s in corpus.train]
    out = {}
    for name, cfg in TRAIN.items():
        t0 = time.perf_counter()
        model, _ = fit(logs, corpus.alphabet, cfg)
        out[name] = (model, time.perf_counter() - t0)
    return out


@pytest.fixture(scope="module")
def test_logs(corpus):
    return [s.log for s in corpus.test]


@pytest.fixture(scope="module")
def reports(trained, test_logs):
    return {name: evaluate(m, test_logs, "both") for name, (m, _) in trained.items()}


def test_01_monotonicity(trained):
    fresh = datagen.generate(datagen.GenConfig(seed=12345, n_train=0, n_test=500))
    logs = [s.log for s in fresh.test]
    t0 = time.perf_counter()
    violations, pairs = 0, 0
    for name in MONOTONE:
        model = trained[name][0]
        for lg in logs:
            s = model.prefix_scores(model.prepare(lg, trace=True))
            violations += int(np.sum(s[1:] < s[:-1]))
            pairs += len(s) - 1
    dt = time.perf_counter() - t0
    record(1, violations == 0 and dt <= 120,
           f"{violations} violations in {pairs} prefix pairs (3 models x 500 logs), {dt:.1f}s")


def test_02_realtime_equals_full(reports):
    diffs = {n: (reports[n].full_auc, reports[n].realtime_auc) for n in MONOTONE}
    ok = all(f == r for f, r in diffs.values())
    record(2, ok, "full == realtime AUC: " +
           ", ".join(f"{n} {f:.6f}/{r:.6f}" for n, (f, r) in diffs.items()))


def test_03_baseline_negative_control(corpus, trained, reports):
    logs = [s.log for s in corpus.test[:100]]
    model = new_model([s.log for s in corpus.train], corpus.alphabet, TRAIN["baseline"].model)
    model.init_params(np.random.default_rng(0))
    violations = 0
    for lg in logs:
        s = model.prefix_scores(model.prepare(lg, trace=True))
        violations += int(np.sum(s[1:] < s[:-1]))
    rep = reports["baseline"]
    ok = violations >= 1 and rep.realtime_auc < rep.full_auc
    record(3, ok, f"random baseline: {violations} violations on 100 logs; trained baseline "
                  f"realtime AUC {rep.realtime_auc:.6f} < full AUC {rep.full_auc:.6f}")


def test_04_learnability(trained, reports):
    deep, base = reports["deep"].full_auc, reports["baseline"].full_auc
    t = trained["deep"][1] + trained["baseline"][1]
    record(4, deep >= 0.90 and base >= 0.95 and t <= 600,
           f"deep monotone AUC {deep:.6f} (>= 0.90), baseline AUC {base:.6f} (>= 0.95), "
           f"training {t:.0f}s")


def _rel(fast, naive):
    """Elementwise relative error, guarded against exact zeros by a scale floor."""
    naive = np.atleast_1d(naive)
    fast = np.atleast_1d(fast)
    scale = max(np.max(np.abs(naive)), 1e-300)
    return float(np.max(np.abs(fast - naive) / np.maximum(np.abs(naive), 1e-12 * scale)))


def test_05_loss_kernels():
    rng = np.random.default_rng(5)
    worst = 0.0
    for i in range(100):
        n = 10_000 if i == 0 else int(np.exp(rng.uniform(np.log(2), np.log(1e4))))
        nb = int(rng.integers(1, n)) if n > 1 else 1
        nm = max(1, n - nb)
        B = rng.normal(rng.normal(), rng.uniform(0.1, 5), nb)
        M = rng.normal(rng.normal(), rng.uniform(0.1, 5), nm)
        l0, b0, m0 = auc_loss_naive(B, M, grad=True)
        l1, b1, m1 = auc_loss_fast(B, M)
        worst = max(worst, _rel(l1, l0), _rel(b1, b0), _rel(m1, m0))
    B, M = rng.normal(size=5000), rng.normal(size=5000)
    tn = min(_timed(lambda: auc_loss_naive(B, M, grad=True)) for _ in range(3))
    tf = min(_timed(lambda: auc_loss_fast(B, M)) for _ in range(3))
    sizes = [1000, 4000, 16000]
    tfs = [min(_timed(lambda n=n: auc_loss_fast(rng.normal(size=n), rng.normal(size=n)))
               for _ in range(5)) for n in sizes]
    record(5, worst <= 1e-9 and tn / tf >= 20,
           f"max rel err {worst:.2e} over 100 batches; naive/fast at n=1e4 = {tn / tf:.0f}x; "
           f"fast time for n=2e3/8e3/3.2e4: " + "/".join(f"{t * 1e3:.2f}ms" for t in tfs))


def _timed(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def test_06_bound():
    rng = np.random.default_rng(6)
    violations = 0
    for _ in range(1000):
        nb, nm = int(rng.integers(1, 60)), int(rng.integers(1, 60))
        B, M = rng.normal(0, rng.uniform(0.05, 3), nb), rng.normal(rng.normal(), rng.uniform(0.05, 3), nm)
        if rng.random() < 0.2:                       # heavy ties
            B, M = np.round(B), np.round(M)
        y = np.array([BENIGN] * nb + [MALWARE] * nm)
        if auc_loss_naive(B, M) < 1 - auc_roc(np.concatenate([B, M]), y):
            violations += 1
    record(6, violations == 0, f"{violations} violations of loss >= 1 - AUC in 1000 batches")


def test_07_grad_check(corpus):
    logs = [s.log for s in corpus.train[:400]]
    errs = {}
    for name, cfg in TRAIN.items():
        model = new_model(logs, corpus.alphabet, cfg.model)
        rng = np.random.default_rng(7)
        init_model(model, [model.prepare(lg) for lg in logs[:64]], rng)
        items = corpus.train[400:408]
        batch = [model.prepare(s.log) for s in items]
        errs[name] = grad_check(model, batch, [s.label for s in items], eps=1e-5, n_coords=30, seed=7)
    record(7, max(errs.values()) < 1e-5,
           "max rel err " + ", ".join(f"{n} {e:.2e}" for n, e in errs.items()))


def _random_lines(rng, n_lines, n_events, n_args):
    return [EncodedLine(int(rng.integers(n_events)),
                        tuple((int(rng.integers(n_args)),) for _ in range(rng.integers(0, 4))))
            for _ in range(n_lines)]


def test_08_pattern_oracle():
    rng = np.random.default_rng(8)
    bad_graphs = 0
    for _ in range(200):
        g = graph_from_log(_random_lines(rng, int(rng.integers(0, 30)),
                                         int(rng.integers(1, 9)), int(rng.integers(1, 13))))
        k = max(1, len(g.event_nodes))
        bad_graphs += extract_patterns(g, k) != oracle_extract(g)
    bad_steps, steps = 0, 0
    for _ in range(100):
        g, ps = BehaviorGraph(), PatternSet()
        for line in _random_lines(rng, int(rng.integers(1, 60)), 8, 12):
            update_patterns(ps, g, add_line(g, line), 3)
            bad_steps += ps != extract_patterns(g, 3)
            steps += 1
    record(8, bad_graphs == 0 and bad_steps == 0,
           f"oracle mismatches {bad_graphs}/200 graphs; incremental mismatches "
           f"{bad_steps}/{steps} lines over 100 logs")


def test_09_incremental_scoring(trained, test_logs):
    worst_sum, worst_div = 0.0, 0.0
    for name in ("deep", "baseline"):
        model = trained[name][0]
        for lg in test_logs[:40]:
            rows = stream_rows(model, lg)
            full = model.score_log(lg)
            worst_sum = max(worst_sum, abs(sum(r.delta for r in rows) - full))
            inc = np.array([r.score for r in rows])
            worst_div = max(worst_div, float(np.max(np.abs(inc - prefix_scores_from_scratch(model, lg)))))
    record(9, worst_sum <= 1e-9 and worst_div <= 1e-9,
           f"|sum(delta) - score| <= {worst_sum:.1e}; incremental vs recompute <= {worst_div:.1e} "
           f"(deep monotone and baseline, 40 logs each)")


def test_10_explain(corpus, trained):
    model = trained["deep"][0]
    hits, reported = 0, 0
    for s in corpus.test:
        if s.label != MALWARE:
            continue
        motif = s.motif_lines
        for h in explain(model, s.log, top_k=3):
            reported += 1
            hits += h["line_index"] in motif
    precision = hits / max(reported, 1)
    record(10, precision >= 0.8,
           f"top-3 delta lines on motif lines: precision {precision:.3f} ({hits}/{reported})")


def test_11_serialization(trained, test_logs, tmp_path):
    ok = True
    for name, (model, _) in trained.items():
        save_model(model, tmp_path / f"{name}.json")
        back = load_model(tmp_path / f"{name}.json")
        ok &= all(back.params[k].tobytes() == v.tobytes() for k, v in model.params.items())
        for lg in test_logs[:50]:
            a = model.prefix_scores(model.prepare(lg, trace=True))
            b = back.prefix_scores(back.prepare(lg, trace=True))
            ok &= a.tobytes() == b.tobytes()
    record(11, bool(ok), "parameters and prefix scores bit-identical after reload (4 models, 50 logs)")
