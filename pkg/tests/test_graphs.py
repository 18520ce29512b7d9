import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vrjplab.graphs import (
    GraphError,
    ball_quotient,
    build_graph,
    graph_distances,
    lattice_box,
    parse_lattice_spec,
    quotient,
    read_edge_list,
    weight_matrix,
    write_edge_list,
)


def test_single_edge():
    g = build_graph(2, [(0, 1, 1.0)])
    assert g.n_vertices == 2 and g.n_edges == 1
    assert g.weight(1, 0) == 1.0


def test_unit_triangle(triangle):
    assert triangle.n_edges == 3
    assert all(triangle.degree(v) == 2.0 for v in range(3))


@pytest.mark.parametrize("edges, msg", [
    ([(0, 1, 1), (0, 1, 2)], "duplicate"),
    ([(0, 1, 1), (1, 1, 1)], "loop"),
    ([(0, 1, 1), (1, 2, 0.0)], "positive"),
    ([(0, 1, 1), (1, 3, 1.0)], None),
])
def test_invalid_edges(edges, msg):
    with pytest.raises(GraphError, match=msg):
        build_graph(3, edges)


def test_disconnected_rejected():
    with pytest.raises(GraphError):
        build_graph(4, [(0, 1, 1.0), (2, 3, 1.0)])


def test_quotient_singleton_relabels(path3):
    q = quotient(path3, {2})
    assert q.graph.n_vertices == 3
    assert q.merged_vertex == 2
    assert q.graph.weight(0, 1) == 1.0 and q.graph.weight(1, 2) == 1.0


def test_quotient_triangle(triangle):
    q = quotient(triangle, {1, 2})
    assert q.graph.n_vertices == 2
    assert q.graph.weight(0, 1) == 2.0


def test_quotient_four_cycle(four_cycle):
    q = quotient(four_cycle, {2, 3})
    x = q.merged_vertex
    assert q.graph.n_edges == 3
    assert q.graph.weight(0, 1) == q.graph.weight(1, x) == q.graph.weight(0, x) == 1.0
    assert q.projection == (0, 1, x, x)


def test_ball_quotient_path():
    g = build_graph(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)])
    q = ball_quotient(g, 0, 2)
    assert q.graph.n_vertices == 3
    assert q.graph.weight(0, 1) == 1.0 and q.graph.weight(1, q.merged_vertex) == 1.0


def test_ball_quotient_too_large(path3):
    ecc = graph_distances(path3, 0).max()
    with pytest.raises(GraphError):
        ball_quotient(path3, 0, int(ecc) + 1)


def test_ball_quotient_grid_center():
    g = lattice_box(2, 3, 1.0)
    q = ball_quotient(g, 4, 1)
    assert q.graph.n_vertices == 2
    assert q.graph.weight(0, 1) == g.degree(4) == 4.0


def test_lattice_boxes():
    p = lattice_box(1, 3, 1.0)
    assert p.n_vertices == 3 and p.n_edges == 2
    c = lattice_box(2, 2, 0.5)
    assert c.n_edges == 4 and all(c.degree(v) == 1.0 for v in range(4))
    cube = lattice_box(3, 3, 1.0)
    assert (cube.n_vertices, cube.n_edges) == (27, 54)


def test_lattice_limit():
    with pytest.raises(GraphError):
        lattice_box(5, 8)


def test_weight_matrix_examples():
    np.testing.assert_array_equal(weight_matrix(build_graph(2, [(0, 1, 2.0)])), [[0, 2], [2, 0]])
    w = weight_matrix(build_graph(3, [(0, 1, 1.0), (1, 2, 3.0)]))
    assert w[0, 2] == 0 and w[1, 2] == 3 and (w == w.T).all()


def test_edge_list_round_trip(tmp_path):
    g = build_graph(4, [(0, 1, 0.25), (1, 2, 3.0), (2, 3, 1e-3), (0, 3, 7.5)])
    path = tmp_path / "g.txt"
    write_edge_list(g, path)
    h = read_edge_list(path)
    assert h.edges == g.edges and np.allclose(h.weights, g.weights)


def test_lattice_spec():
    assert parse_lattice_spec("2,3,0.5").n_edges == 12
    with pytest.raises(GraphError):
        parse_lattice_spec("2,3")


@st.composite
def connected_graphs(draw):
    n = draw(st.integers(3, 8))
    edges = {(i - 1, i) for i in range(1, n)}
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=10))
    edges |= {(min(a, b), max(a, b)) for a, b in extra if a != b}
    ws = draw(st.lists(st.floats(0.1, 5.0), min_size=len(edges), max_size=len(edges)))
    g = build_graph(n, [(u, v, w) for (u, v), w in zip(sorted(edges), ws)])
    k = draw(st.integers(1, n - 1))
    subset = draw(st.sets(st.integers(0, n - 1), min_size=1, max_size=k))
    return g, subset


@settings(max_examples=60, deadline=None)
@given(connected_graphs())
def test_quotient_preserves_cut_weights(case):
    g, a = case
    q = quotient(g, a)
    x = q.merged_vertex
    for y in range(g.n_vertices):
        if y in a:
            continue
        cut = sum(g.weight(y, v) for v in a if v in g.neighbors(y))
        got = q.graph.weight(q.projection[y], x) if cut else 0.0
        assert got == pytest.approx(cut)
    # total weight outside the merged set is unchanged
    inside = sum(w for (u, v), w in zip(g.edges, g.weights) if u in a and v in a)
    assert sum(q.graph.weights) == pytest.approx(sum(g.weights) - inside)
