from monolog.graph import BehaviorGraph, add_line, graph_from_log, to_dot
from monolog.logmodel import EncodedLine

A1, A2, A3 = (1,), (2,), (3, 3)


class TestGraphFromLog:
    def test_empty(self):
        g = graph_from_log([])
        assert g.event_nodes == set() and g.arg_nodes == set() and g.edges == set()

    def test_one_line(self):
        g = graph_from_log([EncodedLine(0, (A1, A2))])
        assert g.event_nodes == {0}
        assert g.arg_nodes == {A1, A2}
        assert g.edges == {(0, A1), (0, A2)}

    def test_shared_argument_is_one_node(self):
        g = graph_from_log([EncodedLine(0, (A1,)), EncodedLine(1, (A1,))])
        assert g.edges == {(0, A1), (1, A1)}
        assert g.arg_nodes == {A1}
        assert g.neighbors(A1) == {0, 1}

    def test_prefix_graphs_nest(self):
        lines = [EncodedLine(0, (A1,)), EncodedLine(1, (A2, A3)), EncodedLine(0, (A3,))]
        graphs = [graph_from_log(lines[:k]) for k in range(len(lines) + 1)]
        for small, big in zip(graphs, graphs[1:]):
            assert small.is_subgraph_of(big)
        assert not graphs[2].is_subgraph_of(graphs[1])


class TestAddLine:
    def test_repeat_line_gives_empty_delta(self):
        g = BehaviorGraph()
        add_line(g, EncodedLine(0, (A1, A2)))
        d = add_line(g, EncodedLine(0, (A2, A1)))
        assert not d
        assert g.line_count == 2

    def test_new_event_without_args(self):
        g = graph_from_log([EncodedLine(0, (A1,))])
        d = add_line(g, EncodedLine(4, ()))
        assert d.new_events == [4] and d.new_args == [] and d.new_edges == []

    def test_existing_event_new_arg(self):
        g = graph_from_log([EncodedLine(0, (A1,))])
        before = g.copy()
        d = add_line(g, EncodedLine(0, (A3,)))
        assert d.new_events == [] and d.new_args == [A3] and d.new_edges == [(0, A3)]
        assert g.edges - before.edges == {(0, A3)}

    def test_known_arg_new_edge(self):
        g = graph_from_log([EncodedLine(0, (A1,)), EncodedLine(1, ())])
        d = add_line(g, EncodedLine(1, (A1,)))
        assert d.new_args == [] and d.new_edges == [(1, A1)]

    def test_copy_is_independent(self):
        g = graph_from_log([EncodedLine(0, (A1,))])
        h = g.copy()
        add_line(h, EncodedLine(0, (A2,)))
        assert g.edges == {(0, A1)}


class TestDot:
    def test_dot_lists_nodes_and_edges(self):
        dot = to_dot(graph_from_log([EncodedLine(0, (A1,)), EncodedLine(1, (A1,))]))
        assert dot.startswith("graph behavior {")
        assert dot.count(" -- ") == 2
        assert "e0 [shape=box" in dot
