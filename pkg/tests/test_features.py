import numpy as np
import pytest
import scipy.sparse as sp

from monolog.features import (POOL_ALL, POOL_MAX, Featurizer, GroupConfig, count_matrix,
                              counter_features, default_groups, embed, embed_rows, pool,
                              trace_active_rows, vectorize_pattern)
from monolog.logmodel import EncodedLine, EventAlphabet
from monolog.patterns import Pattern

N_E, V = 3, 10


class TestVectorize:
    def test_event_only(self):
        v = vectorize_pattern(Pattern((1,), frozenset()), N_E, V)
        expected = np.zeros(N_E + V + 1)
        expected[1] = 1
        np.testing.assert_array_equal(v, expected)

    def test_repeated_token_counts_twice(self):
        v = vectorize_pattern(Pattern((0,), frozenset({(7, 7)})), N_E, V)
        assert v[0] == 1 and v[N_E + 7] == 2 and v.sum() == 3

    def test_two_events_one_arg(self):
        v = vectorize_pattern(Pattern((0, 1), frozenset({(3,)})), N_E, V)
        assert v[0] == v[1] == 1 and v[N_E + 3] == 1 and v.sum() == 3

    def test_oov_slot_is_last(self):
        v = vectorize_pattern(Pattern((0,), frozenset({(V,)})), N_E, V)
        assert v[-1] == 1

    def test_count_matrix_matches_dense(self):
        pats = [Pattern((0,), frozenset({(1, 2), (2, 2, V)})), Pattern((0, 2), frozenset()),
                Pattern((1,), frozenset({(4,)}))]
        C = count_matrix([p.args for p in pats], [p.events for p in pats], N_E, V)
        dense = np.stack([vectorize_pattern(p, N_E, V) for p in pats])
        np.testing.assert_array_equal(C.toarray(), dense)
        assert C.has_sorted_indices


class TestEmbed:
    def test_zero_input_gives_bias(self):
        W = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(embed(np.zeros(3), W, np.array([1.5, -2.0]), monotone=False),
                                      [1.5, -2.0])

    def test_monotone_uses_magnitudes(self):
        np.testing.assert_array_equal(embed([3.0], np.array([[-2.0]]), np.array([0.0])), [6.0])

    def test_baseline_keeps_signs(self):
        np.testing.assert_array_equal(embed([3.0], np.array([[-2.0]]), np.array([0.0]), monotone=False),
                                      [-6.0])

    def test_sparse_rows_match_dense_product(self):
        rng = np.random.default_rng(1)
        X = rng.integers(0, 3, size=(5, 7)).astype(float)
        W, b = rng.normal(size=(4, 7)), rng.normal(size=4)
        np.testing.assert_allclose(embed(sp.csr_matrix(X), W, b, monotone=False), X @ W.T + b)

    def test_linear_in_counts(self):
        rng = np.random.default_rng(4)
        W, b = rng.normal(size=(3, 5)), rng.normal(size=3)
        x, y = rng.integers(0, 4, size=5).astype(float), rng.integers(0, 4, size=5).astype(float)
        for mono in (True, False):
            np.testing.assert_allclose(embed(x + y, W, b, mono) - (b if not mono else np.abs(b)),
                                       embed(x, W, b, mono) + embed(y, W, b, mono)
                                       - 2 * (b if not mono else np.abs(b)), rtol=1e-12)

    def test_growing_counts_never_lower_embedding(self):
        rng = np.random.default_rng(2)
        WT = np.abs(rng.normal(size=(40, 16)))
        b = np.abs(rng.normal(size=16))
        for _ in range(200):
            x = (rng.random(40) < 0.2) * rng.integers(1, 4, size=40)
            y = x + (rng.random(40) < 0.1) * rng.integers(0, 3, size=40)
            ex = embed_rows(sp.csr_matrix(x[None].astype(float)), WT, b)
            ey = embed_rows(sp.csr_matrix(y[None].astype(float)), WT, b)
            assert np.all(ex <= ey)

    def test_empty_matrix(self):
        assert embed_rows(sp.csr_matrix((0, 4)), np.ones((4, 2)), np.zeros(2)).shape == (0, 2)


class TestPool:
    def test_empty_is_zeros(self):
        np.testing.assert_array_equal(pool(np.zeros((0, 3)), POOL_ALL), np.zeros(9))
        np.testing.assert_array_equal(pool([], POOL_MAX, dim=2), np.zeros(2))

    def test_max(self):
        np.testing.assert_array_equal(pool([[1, 5], [3, 2]]), [3, 5])

    def test_min_max_avg(self):
        np.testing.assert_array_equal(pool([[1, 5], [3, 2]], POOL_ALL), [1, 2, 3, 5, 2, 3.5])

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            pool([[1.0]], ("median",))


class TestCounters:
    alphabet = EventAlphabet(["a", "b", "c"])
    groups = GroupConfig(["g0", "g1"], [[0, 1], [2]], 3)

    def test_empty_log(self):
        np.testing.assert_array_equal(counter_features([], self.groups), [0, 0])

    def test_counts_per_group(self):
        lines = [EncodedLine(0), EncodedLine(1), EncodedLine(0), EncodedLine(2)]
        np.testing.assert_array_equal(counter_features(lines, self.groups), [3, 1])

    def test_prefix_is_dominated(self):
        lines = [EncodedLine(e) for e in (0, 2, 1, 2, 2)]
        full = counter_features(lines, self.groups)
        for k in range(len(lines)):
            assert np.all(counter_features(lines[:k], self.groups) <= full)

    def test_json_round_trip(self, tmp_path):
        self.groups.save(tmp_path / "g.json", self.alphabet)
        assert GroupConfig.load(tmp_path / "g.json", self.alphabet) == self.groups

    def test_bad_event_id(self):
        with pytest.raises(ValueError):
            GroupConfig(["g"], [[5]], 3)

    def test_default_groups_pick_frequent_types(self):
        corpus = [[EncodedLine(2), EncodedLine(2), EncodedLine(0)]]
        g = default_groups(corpus, self.alphabet, n_groups=2)
        assert g.names == ["a", "c"]


class TestFeaturizer:
    def lines(self):
        rng = np.random.default_rng(3)
        return [EncodedLine(int(rng.integers(4)), tuple((int(rng.integers(6)),) for _ in range(rng.integers(3))))
                for _ in range(30)]

    def featurizer(self):
        return Featurizer(4, 6, GroupConfig(["x", "y"], [[0], [1, 2, 3]], 4), k_max=2)

    def test_traced_final_matrix_matches_plain(self):
        fz = self.featurizer()
        a = fz.prepare(self.lines())
        b = fz.prepare(self.lines(), trace=True)
        assert a.keys == b.keys
        np.testing.assert_array_equal(a.C.toarray(), b.C.toarray())
        np.testing.assert_array_equal(a.counts, b.counts)

    def test_trace_rows_rebuild_each_prefix(self):
        fz = self.featurizer()
        lines = self.lines()
        tr = fz.prepare(lines, trace=True)
        Cv = tr.trace.C.toarray()
        for k, rows in enumerate(trace_active_rows(tr.trace, len(tr.keys), len(lines)), start=1):
            ref = fz.prepare(lines[:k])
            np.testing.assert_array_equal(Cv[rows], ref.C.toarray())
            np.testing.assert_array_equal(tr.trace.counts[k], ref.counts)
