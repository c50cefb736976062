"""From raw log lines to pattern count vectors, one step at a time.

Run: python3 demos/01_patterns_walkthrough.py
"""
from monolog.features import count_matrix
from monolog.graph import BehaviorGraph, add_line, to_dot
from monolog.logmodel import EventAlphabet, EventLine, Log, build_vocabulary, split_tokens
from monolog.patterns import PatternSet, extract_patterns, update_patterns

alphabet = EventAlphabet(["CreateFile", "RegSetValue", "CreateProcess"])
raw = Log((
    EventLine(0, ("C:\\Windows\\374683.ini",)),
    EventLine(1, ("HKCU\\Software\\Run\\x", "C:\\Windows\\374683.ini")),
    EventLine(2, ("C:\\Windows\\374683.ini",)),
    EventLine(0, ("C:\\Users\\a.txt",)),
))

# Arguments are split wherever the character class changes.
print("tokens:", split_tokens(raw.lines[0].args[0]))

vocab = build_vocabulary([raw], max_size=8)
print("vocabulary:", vocab.tokens, "| OOV id:", vocab.oov_id)
lines = vocab.encode(raw)

# Build the graph line by line and keep the pattern set current as we go.
g, ps = BehaviorGraph(), PatternSet()
for i, line in enumerate(lines):
    delta = add_line(g, line)
    changed = update_patterns(ps, g, delta, k_max=3)
    print(f"line {i}: +{len(delta.new_events)} events, +{len(delta.new_args)} args, "
          f"+{len(delta.new_edges)} edges -> {len(changed)} patterns new or grown")

assert ps == extract_patterns(g, 3)
print("\npatterns (event set -> shared arguments):")
for p in ps.patterns():
    names = [alphabet.names[e] for e in p.events]
    print(f"  {names} -> {len(p.args)} argument(s)")

C = count_matrix([ps.closure(k) for k in ps.keys()], ps.keys(), len(alphabet), len(vocab))
print("\ncount matrix:", C.shape, "nonzeros:", C.nnz)
print(C.toarray().astype(int))

print("\nGraphviz:")
print(to_dot(g, alphabet, vocab))
