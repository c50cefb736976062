"""Full-log versus real-time evaluation for a monotone and a non-monotone model.

A non-monotone model can learn that installer activity late in a log means
"benign". Read in real time, the same log looks suspicious before that
evidence arrives, so its maximum prefix score is high. A monotone model
cannot use such evidence, and its two evaluations coincide.

Run: python3 demos/02_monotone_vs_baseline.py   (about a minute)
Writes score_curves.csv: one row per line of one benign log, for plotting.
"""
import csv

import numpy as np

from monolog import datagen
from monolog.classifiers import ModelConfig
from monolog.scoring import evaluate, prefix_scores
from monolog.training import TrainConfig, fit

corpus = datagen.generate(datagen.GenConfig(seed=1, n_train=1000, n_test=500))
train_logs = [s.log for s in corpus.train]
test_logs = [s.log for s in corpus.test]

models = {}
for name, mono in (("deep monotone", True), ("deep non-monotone", False)):
    cfg = TrainConfig(model=ModelConfig(classifier="deep", monotone=mono), epochs=15, lr=3e-3)
    models[name], _ = fit(train_logs, corpus.alphabet, cfg)

print(f"{'model':<20}{'full-log AUC':>14}{'real-time AUC':>15}")
for name, m in models.items():
    r = evaluate(m, test_logs, "both")
    print(f"{name:<20}{r.full_auc:>14.6f}{r.realtime_auc:>15.6f}")

# The score curve of an installer-like benign log (decoys early, installer late).
benign = next(s.log for s in corpus.test
              if s.label == 0 and any("msiexec" in a for ln in s.log.lines for a in ln.args))
curves = {name: prefix_scores(m, benign) for name, m in models.items()}
with open("score_curves.csv", "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["line_index"] + list(curves))
    for k in range(len(benign) + 1):
        w.writerow([k - 1] + [repr(float(c[k])) for c in curves.values()])
for name, c in curves.items():
    print(f"{name}: final score {c[-1]:+.3f}, peak over prefixes {c[1:].max():+.3f}, "
          f"nondecreasing: {bool(np.all(np.diff(c) >= 0))}")
print("wrote score_curves.csv")
