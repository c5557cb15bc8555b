import numpy as np
import pytest

from rago import so3, synth
from rago.errors import DisconnectedGraph, DuplicateEdge, ParseError
from rago.viewgraph import (
    ViewGraph,
    dumps,
    is_connected,
    load,
    loads,
    neighbors,
    read_vertices,
    save,
    write_vertices,
)

SMALL = synth.SynthConfig((8, 14), (0.3, 0.5), (2.0, 8.0), (0.0, 0.2))


def _cfg(seed):
    return synth.SynthConfig(**{**SMALL.__dict__, "seed": seed})


def test_neighbors_reverse_view_is_transpose():
    r = so3.random_rotation(np.random.default_rng(0))
    g = ViewGraph.build(2, [(0, 1, r)])
    (v, r10), = neighbors(g, 1)
    assert v == 0
    assert np.array_equal(r10, r.T)
    (v, r01), = neighbors(g, 0)
    assert np.array_equal(r01, r)
    assert np.abs(r10.T - r).max() < 1e-12


def test_star_graph_neighbors():
    eye = np.eye(3)
    g = ViewGraph.build(4, [(0, 1, eye), (0, 2, eye), (3, 0, eye)])
    assert [v for v, _ in neighbors(g, 0)] == [1, 2, 3]
    with pytest.raises(IndexError):
        neighbors(g, 4)


def test_build_canonicalizes_and_sorts():
    rng = np.random.default_rng(1)
    a, b, c = so3.random_rotations(3, rng)
    g = ViewGraph.build(3, [(2, 1, a), (0, 2, b), (1, 0, c)])
    assert g.edge_index.tolist() == [[0, 1], [0, 2], [1, 2]]
    assert np.array_equal(g.rel[0], c.T)
    assert np.array_equal(g.rel[1], b)
    assert np.array_equal(g.rel[2], a.T)


def test_every_edge_views_are_transposes():
    g = synth.generate(_cfg(3))
    for u in range(g.node_count):
        for v, r in neighbors(g, u):
            back = dict((w, s) for w, s in neighbors(g, v))[u]
            assert np.array_equal(back, r.T)


def test_build_rejects_bad_edges():
    eye = np.eye(3)
    with pytest.raises(DuplicateEdge):
        ViewGraph.build(2, [(0, 1, eye), (1, 0, eye)])
    with pytest.raises(ValueError):
        ViewGraph.build(2, [(1, 1, eye)])
    with pytest.raises(ValueError):
        ViewGraph.build(2, [(0, 2, eye)])
    with pytest.raises(DisconnectedGraph):
        ViewGraph.build(4, [(0, 1, eye), (2, 3, eye)])


def test_is_connected_examples():
    eye = np.eye(3)
    path = ViewGraph.build(4, [(0, 1, eye), (1, 2, eye), (2, 3, eye)])
    assert is_connected(path)
    empty = ViewGraph(2, np.zeros((0, 2), dtype=np.int64), np.zeros((0, 3, 3)))
    assert not is_connected(empty)


def _union_find_connected(n, pairs):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in pairs:
        parent[find(u)] = find(v)
    return len({find(i) for i in range(n)}) == 1


def test_is_connected_matches_union_find():
    rng = np.random.default_rng(5)
    seen = {True: 0, False: 0}
    for _ in range(100):
        n = int(rng.integers(2, 15))
        m = int(rng.integers(0, n + 3))
        pairs = set()
        for _ in range(m):
            u, v = rng.choice(n, size=2, replace=False)
            pairs.add((min(u, v), max(u, v)))
        pairs = sorted(pairs)
        g = ViewGraph(n, np.array(pairs, dtype=np.int64).reshape(-1, 2),
                      np.broadcast_to(np.eye(3), (len(pairs), 3, 3)).copy())
        expect = _union_find_connected(n, pairs)
        assert is_connected(g) == expect
        seen[expect] += 1
    assert seen[True] > 0 and seen[False] > 0


def test_save_load_round_trip(tmp_path):
    g = synth.generate(_cfg(7))
    path = tmp_path / "g.txt"
    save(g, path)
    h = load(path)
    assert h.node_count == g.node_count
    assert np.array_equal(h.edge_index, g.edge_index)
    assert np.array_equal(h.rel, g.rel)
    assert np.array_equal(h.gt_abs, g.gt_abs)
    assert np.array_equal(h.outlier_flags, g.outlier_flags)
    assert dumps(h) == path.read_text()


def test_canonical_file_is_byte_stable():
    g = synth.generate(_cfg(8))
    text = dumps(g)
    assert dumps(loads(text)) == text


def test_parse_comments_and_optional_rotations():
    text = "# header\nVERTEX 0\nVERTEX 1  # trailing\nEDGE 1 0 1 0 0 0 1 0 0 0 1 O\n"
    g = loads(text)
    assert g.node_count == 2 and g.gt_abs is None
    assert g.edge_index.tolist() == [[0, 1]]
    assert g.outlier_flags.tolist() == [True]


def _edge_line(u, v):
    return f"EDGE {u} {v} " + " ".join(["1", "0", "0", "0", "1", "0", "0", "0", "1"])


@pytest.mark.parametrize(
    "text,line",
    [
        ("VERTEX 0\nVERTEX 1\n" + _edge_line(5, 5), 3),
        ("VERTEX 0\nVERTEX 1\nEDGE 0 1 1 2 3\n", 3),
        ("VERTEX 0\nVERTEX 1\n" + _edge_line(0, 1).replace(" 0 0 1", " 0 x 1"), 3),
        ("VERTEX 0\nFOO 1\n", 2),
        ("VERTEX 0\nVERTEX 0\n", 2),
        ("VERTEX 0\nVERTEX 1\n" + _edge_line(0, 7), 3),
    ],
)
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ParseError) as info:
        loads(text)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}:")


def test_load_rejects_duplicates_and_disconnected():
    with pytest.raises(DuplicateEdge):
        loads("VERTEX 0\nVERTEX 1\n" + _edge_line(0, 1) + "\n" + _edge_line(1, 0) + "\n")
    with pytest.raises(DisconnectedGraph):
        loads("\n".join(["VERTEX %d" % i for i in range(4)] + [_edge_line(0, 1), _edge_line(2, 3)]))


def test_vertex_file_round_trip(tmp_path):
    rs = so3.random_rotations(6, np.random.default_rng(2))
    write_vertices(rs, tmp_path / "v.txt")
    assert np.array_equal(read_vertices(tmp_path / "v.txt"), rs)


def test_relabel_and_subgraph():
    cfg = synth.SynthConfig((10, 10), (0.4, 0.4), (0.0, 0.0), (0.0, 0.0), seed=9)
    g = synth.generate(cfg)
    perm = np.random.default_rng(0).permutation(g.node_count)
    h = g.relabel(perm)
    assert h.edge_count == g.edge_count
    assert {tuple(sorted((perm[u], perm[v]))) for u, v in g.edge_index} == set(map(tuple, h.edge_index.tolist()))
    assert np.abs(h.rel - h.gt_relative()).max() < 1e-12
    keep = np.ones(g.edge_count, dtype=bool)
    keep[0] = False
    assert g.subgraph(keep).edge_count == g.edge_count - 1
