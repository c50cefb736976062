import numpy as np
from hypothesis import given, settings, strategies as st

from monolog.graph import BehaviorGraph, add_line, graph_from_log
from monolog.logmodel import EncodedLine
from monolog.patterns import (Pattern, PatternSet, extract_patterns, oracle_extract,
                              update_patterns)

E1, E2, E3 = 0, 1, 2
A1, A2, A3 = (10,), (11,), (12, 12)


def example_graph():
    # e1-a1, e1-a2, e2-a1
    return graph_from_log([EncodedLine(E1, (A1, A2)), EncodedLine(E2, (A1,))])


class TestExtract:
    def test_two_by_two_example(self):
        ps = extract_patterns(example_graph(), k_max=2)
        assert ps.patterns() == [Pattern((E1,), frozenset({A1, A2})),
                                 Pattern((E1, E2), frozenset({A1})),
                                 Pattern((E2,), frozenset({A1}))]

    def test_empty_graph(self):
        assert len(extract_patterns(BehaviorGraph())) == 0

    def test_isolated_event(self):
        ps = extract_patterns(graph_from_log([EncodedLine(E1, ())]))
        assert ps.patterns() == [Pattern((E1,), frozenset())]

    def test_k_max_restricts_subset_size(self):
        g = graph_from_log([EncodedLine(e, (A1,)) for e in range(5)])
        ps = extract_patterns(g, k_max=2)
        assert len(ps) == 5 + 10
        assert ps == oracle_extract(g).restricted(2)

    def test_matches_oracle_on_example(self):
        g = example_graph()
        assert extract_patterns(g, k_max=len(g.event_nodes)) == oracle_extract(g)


class TestUpdate:
    def test_new_arg_joins_closures(self):
        g = example_graph()
        ps = extract_patterns(g, 3)
        d = add_line(g, EncodedLine(E1, (A3,)))
        changed = update_patterns(ps, g, d, 3)
        assert changed == {(E1,)}
        assert ps.closure((E1,)) == {A1, A2, A3}
        assert ps == extract_patterns(g, 3)

    def test_new_event_adds_its_subsets_only(self):
        g = example_graph()
        ps = extract_patterns(g, 3)
        before = ps.as_dict()
        d = add_line(g, EncodedLine(E3, ()))
        changed = update_patterns(ps, g, d, 3)
        assert changed == {(E3,), (E1, E3), (E2, E3), (E1, E2, E3)}
        for key, clo in before.items():
            assert ps.closure(key) == clo
        assert ps == extract_patterns(g, 3)

    def test_empty_delta(self):
        g = example_graph()
        ps = extract_patterns(g, 3)
        before = ps.as_dict()
        d = add_line(g, EncodedLine(E1, (A1,)))
        assert update_patterns(ps, g, d, 3) == set()
        assert ps.as_dict() == before


lines_strategy = st.lists(
    st.tuples(st.integers(0, 5),
              st.lists(st.tuples(st.integers(0, 6)).map(tuple), max_size=3)),
    max_size=25)


class TestProperties:
    @settings(max_examples=150, deadline=None)
    @given(lines_strategy)
    def test_incremental_equals_recompute(self, raw):
        g = BehaviorGraph()
        ps = PatternSet()
        for e, args in raw:
            d = add_line(g, EncodedLine(e, tuple(args)))
            update_patterns(ps, g, d, 3)
            assert ps == extract_patterns(g, 3)

    @settings(max_examples=100, deadline=None)
    @given(lines_strategy)
    def test_full_extract_matches_oracle(self, raw):
        g = graph_from_log(EncodedLine(e, tuple(a)) for e, a in raw)
        assert extract_patterns(g, k_max=max(1, len(g.event_nodes))) == oracle_extract(g)

    @settings(max_examples=100, deadline=None)
    @given(lines_strategy, st.integers(0, 25))
    def test_closures_only_grow(self, raw, k):
        lines = [EncodedLine(e, tuple(a)) for e, a in raw]
        small = extract_patterns(graph_from_log(lines[:k])).as_dict()
        big = extract_patterns(graph_from_log(lines)).as_dict()
        for key, clo in small.items():
            assert clo <= big[key]

    def test_closure_definition(self):
        rng = np.random.default_rng(0)
        g = BehaviorGraph()
        for _ in range(40):
            add_line(g, EncodedLine(int(rng.integers(6)), tuple((int(rng.integers(9)),)
                                                                for _ in range(rng.integers(3)))))
        for p in extract_patterns(g, 3).patterns():
            expected = {a for a in g.arg_nodes if all(a in g.event_adj[e] for e in p.events)}
            assert p.args == expected
