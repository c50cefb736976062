"""Which lines made the score jump?

Trains a small monotone model, then lists the largest per-line score
increases of a few malware logs next to the planted motif lines.

Run: python3 demos/03_explain_detections.py
"""
from monolog import datagen
from monolog.classifiers import ModelConfig
from monolog.scoring import explain
from monolog.training import TrainConfig, fit

corpus = datagen.generate(datagen.GenConfig(seed=2, n_train=800, n_test=200))
model, _ = fit([s.log for s in corpus.train], corpus.alphabet,
               TrainConfig(model=ModelConfig(classifier="linear"), epochs=10, lr=1e-2))

shown = 0
for s in corpus.test:
    if s.label != 1:
        continue
    print(f"\n{s.log.name}: {len(s.log)} lines, motifs at {s.motif_spans}, "
          f"earliest detectable after line {s.earliest_detectable - 1}")
    for h in explain(model, s.log, top_k=3):
        mark = "motif" if h["line_index"] in s.motif_lines else "     "
        print(f"  [{mark}] line {h['line_index']:3d}  +{h['delta']:.3f}  {h['event']} "
              f"{' | '.join(h['args'])[:70]}")
    shown += 1
    if shown == 4:
        break
