"""View-graph data model and its text serialization.

File format, one record per line (``#`` starts a comment)::

    VERTEX <id> [<9 row-major floats of the ground-truth rotation>]
    EDGE <u> <v> <9 row-major floats of R_uv> [O]

``O`` flags a ground-truth outlier. Edges are stored undirected with
``u < v``; a reversed record is canonicalized by transposing its rotation.
"""

from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DisconnectedGraph, DuplicateEdge, ParseError

HEADER = "# rago viewgraph v1"


@dataclass(frozen=True, eq=False)
class ViewGraph:
    """Undirected view-graph.

    Attributes:
        node_count: number of cameras N.
        edge_index: ``(E, 2)`` int array, rows ``(u, v)`` with ``u < v``,
            sorted lexicographically.
        rel: ``(E, 3, 3)`` observed relative rotations ``R_uv ~ R_u R_v^T``.
        gt_abs: optional ``(N, 3, 3)`` ground-truth absolute rotations.
        outlier_flags: optional ``(E,)`` bool array aligned with edges.
    """

    node_count: int
    edge_index: np.ndarray
    rel: np.ndarray
    gt_abs: np.ndarray | None = None
    outlier_flags: np.ndarray | None = None

    @classmethod
    def build(cls, node_count, edges, gt_abs=None, outlier_flags=None, check_connected=True):
        """Validate, canonicalize and sort ``(u, v, R_uv)`` triples."""
        if node_count < 1:
            raise ValueError("node_count must be positive")
        records = []
        seen = set()
        flags = list(outlier_flags) if outlier_flags is not None else [False] * len(edges)
        if len(flags) != len(edges):
            raise ValueError("outlier_flags must align with edges")
        for (u, v, r), flag in zip(edges, flags):
            u, v = int(u), int(v)
            r = np.asarray(r, dtype=float)
            if u == v:
                raise ValueError(f"self loop at node {u}")
            if not (0 <= u < node_count and 0 <= v < node_count):
                raise ValueError(f"edge ({u}, {v}) references a node outside [0, {node_count})")
            if u > v:
                u, v, r = v, u, r.T
            if (u, v) in seen:
                raise DuplicateEdge(f"duplicate edge ({u}, {v})")
            seen.add((u, v))
            records.append((u, v, r, bool(flag)))
        records.sort(key=lambda rec: (rec[0], rec[1]))
        edge_index = np.array([(u, v) for u, v, _, _ in records], dtype=np.int64).reshape(-1, 2)
        rel = np.array([r for _, _, r, _ in records], dtype=float).reshape(-1, 3, 3)
        flag_arr = None
        if outlier_flags is not None:
            flag_arr = np.array([f for *_, f in records], dtype=bool)
        if gt_abs is not None:
            gt_abs = np.asarray(gt_abs, dtype=float).reshape(node_count, 3, 3)
        g = cls(node_count, edge_index, rel, gt_abs, flag_arr)
        if check_connected and not is_connected(g):
            raise DisconnectedGraph(f"graph with {node_count} nodes is not connected")
        return g

    @property
    def edge_count(self):
        return len(self.edge_index)

    @property
    def edges(self):
        return [(int(u), int(v), r) for (u, v), r in zip(self.edge_index, self.rel)]

    def degrees(self):
        return np.bincount(self.edge_index.ravel(), minlength=self.node_count)

    def adjacency(self):
        """Per-node list of ``(neighbor, edge_id, forward)`` sorted by neighbor id.

        ``forward`` is True when the node is the stored ``u`` endpoint.
        """
        adj = [[] for _ in range(self.node_count)]
        for e, (u, v) in enumerate(self.edge_index):
            adj[u].append((int(v), e, True))
            adj[v].append((int(u), e, False))
        for lst in adj:
            lst.sort()
        return adj

    def gt_relative(self):
        """Ground-truth relative rotations ``R̄_u R̄_v^T`` per edge."""
        if self.gt_abs is None:
            raise ValueError("graph has no ground truth")
        u, v = self.edge_index[:, 0], self.edge_index[:, 1]
        return self.gt_abs[u] @ np.swapaxes(self.gt_abs[v], -1, -2)

    def subgraph(self, keep):
        """Graph restricted to the edges selected by boolean mask ``keep``."""
        keep = np.asarray(keep, dtype=bool)
        flags = self.outlier_flags[keep] if self.outlier_flags is not None else None
        return ViewGraph(self.node_count, self.edge_index[keep], self.rel[keep], self.gt_abs, flags)

    def with_gt(self, gt_abs):
        return ViewGraph(self.node_count, self.edge_index, self.rel, gt_abs, self.outlier_flags)

    def relabel(self, perm):
        """Graph with node ``i`` renamed to ``perm[i]``."""
        perm = np.asarray(perm)
        edges = [(perm[u], perm[v], r) for (u, v), r in zip(self.edge_index, self.rel)]
        gt = None
        if self.gt_abs is not None:
            gt = np.empty_like(self.gt_abs)
            gt[perm] = self.gt_abs
        flags = self.outlier_flags if self.outlier_flags is not None else None
        return ViewGraph.build(self.node_count, edges, gt, flags)


def neighbors(g, u):
    """Neighbors of ``u`` as ``(v, R_uv)`` pairs in ascending ``v``.

    For a stored edge ``(a, b, R)`` the view from ``b`` is ``R^T``.
    """
    if not 0 <= u < g.node_count:
        raise IndexError(f"node {u} out of range")
    out = []
    for v, e, forward in g.adjacency()[u]:
        r = g.rel[e]
        out.append((v, r if forward else r.T))
    return out


def is_connected(g):
    if g.node_count == 1:
        return True
    adj = [[] for _ in range(g.node_count)]
    for u, v in g.edge_index:
        adj[u].append(v)
        adj[v].append(u)
    seen = np.zeros(g.node_count, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        x = queue.popleft()
        for y in adj[x]:
            if not seen[y]:
                seen[y] = True
                queue.append(y)
    return bool(seen.all())


def _fmt(values):
    return " ".join(format(float(x), ".17g") for x in np.ravel(values))


def dumps(g):
    lines = [HEADER]
    for i in range(g.node_count):
        if g.gt_abs is not None:
            lines.append(f"VERTEX {i} {_fmt(g.gt_abs[i])}")
        else:
            lines.append(f"VERTEX {i}")
    for e, ((u, v), r) in enumerate(zip(g.edge_index, g.rel)):
        line = f"EDGE {u} {v} {_fmt(r)}"
        if g.outlier_flags is not None and g.outlier_flags[e]:
            line += " O"
        lines.append(line)
    return "\n".join(lines) + "\n"


def save(g, path):
    Path(path).write_text(dumps(g))


def _parse_floats(tokens, lineno):
    try:
        vals = [float(t) for t in tokens]
    except ValueError as exc:
        raise ParseError(f"bad number ({exc})", lineno) from None
    return np.array(vals).reshape(3, 3)


def _parse_int(token, lineno):
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"bad node id {token!r}", lineno) from None


def parse_records(text):
    """Parse records into ``(vertices, edges)`` without graph validation.

    vertices maps id to an optional rotation; edges is a list of
    ``(u, v, R, outlier, lineno)``.
    """
    vertices = {}
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        kind = tok[0]
        if kind == "VERTEX":
            if len(tok) not in (2, 11):
                raise ParseError("VERTEX expects an id and optionally 9 floats", lineno)
            vid = _parse_int(tok[1], lineno)
            if vid < 0:
                raise ParseError(f"negative vertex id {vid}", lineno)
            if vid in vertices:
                raise ParseError(f"duplicate vertex {vid}", lineno)
            vertices[vid] = _parse_floats(tok[2:], lineno) if len(tok) == 11 else None
        elif kind == "EDGE":
            flag = False
            if len(tok) == 13 and tok[12] == "O":
                flag = True
                tok = tok[:12]
            if len(tok) != 12:
                raise ParseError("EDGE expects two ids, 9 floats and an optional O", lineno)
            u, v = _parse_int(tok[1], lineno), _parse_int(tok[2], lineno)
            if u == v:
                raise ParseError(f"self loop at node {u}", lineno)
            if u < 0 or v < 0:
                raise ParseError("negative node id", lineno)
            edges.append((u, v, _parse_floats(tok[3:12], lineno), flag, lineno))
        else:
            raise ParseError(f"unknown record type {kind!r}", lineno)
    return vertices, edges


def read_vertices(path):
    """Read only the VERTEX rotations of a file as an ``(N, 3, 3)`` array."""
    vertices, _ = parse_records(Path(path).read_text())
    n = len(vertices)
    if sorted(vertices) != list(range(n)):
        raise ParseError("vertex ids must be 0..N-1")
    if n == 0 or any(vertices[i] is None for i in range(n)):
        raise ParseError("every VERTEX needs a rotation")
    return np.array([vertices[i] for i in range(n)])


def write_vertices(rotations, path):
    lines = [HEADER] + [f"VERTEX {i} {_fmt(r)}" for i, r in enumerate(rotations)]
    Path(path).write_text("\n".join(lines) + "\n")


def loads(text):
    vertices, edges = parse_records(text)
    if vertices:
        n = len(vertices)
        if sorted(vertices) != list(range(n)):
            raise ParseError("vertex ids must be 0..N-1")
    else:
        n = 1 + max((max(u, v) for u, v, *_ in edges), default=-1)
        if n == 0:
            raise ParseError("file contains no vertices or edges")
    seen = {}
    for u, v, _, _, lineno in edges:
        if u >= n or v >= n:
            raise ParseError(f"edge ({u}, {v}) references an undeclared vertex", lineno)
        key = (min(u, v), max(u, v))
        if key in seen:
            raise DuplicateEdge(f"line {lineno}: duplicate edge {key} (first at line {seen[key]})")
        seen[key] = lineno
    gt = None
    if vertices:
        with_rot = [vertices[i] is not None for i in range(n)]
        if all(with_rot):
            gt = np.array([vertices[i] for i in range(n)])
        elif any(with_rot):
            raise ParseError("either all or no VERTEX records may carry rotations")
    any_flag = any(e[3] for e in edges)
    flags = [e[3] for e in edges] if any_flag or gt is not None else None
    return ViewGraph.build(n, [(u, v, r) for u, v, r, _, _ in edges], gt, flags)


def load(path):
    return loads(Path(path).read_text())
