"""Non-learned solvers: spanning-tree initialization and Weiszfeld averaging."""

from collections import deque

import numpy as np

from . import so3
from .errors import DisconnectedGraph

WEISZFELD_EPS = 1e-6  # radians


def spt_init(g, policy="max-degree-root", rng=None):
    """Propagate rotations from a root along a BFS spanning tree.

    The root gets the identity; walking edge ``(u, v)`` from ``u`` sets
    ``R_v = R_uv^T R_u`` where ``R_uv`` is the measurement seen from ``u``.

    Args:
        g: connected ViewGraph.
        policy: ``"max-degree-root"`` (BFS from the highest-degree node,
            lowest id on ties, ascending neighbor order) or ``"random-root"``
            (uniform root, shuffled adjacency order).
        rng: numpy Generator, required for ``"random-root"``.

    Returns:
        ``(N, 3, 3)`` array of absolute rotations.
    """
    adj = g.adjacency()
    if policy == "max-degree-root":
        root = int(np.argmax(g.degrees()))
    elif policy == "random-root":
        if rng is None:
            raise ValueError("random-root policy needs an rng")
        root = int(rng.integers(g.node_count))
        adj = [[lst[i] for i in rng.permutation(len(lst))] for lst in adj]
    else:
        raise ValueError(f"unknown SPT policy {policy!r}")

    est = np.empty((g.node_count, 3, 3))
    done = np.zeros(g.node_count, dtype=bool)
    est[root] = np.eye(3)
    done[root] = True
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v, e, forward in adj[u]:
            if done[v]:
                continue
            r_uv = g.rel[e] if forward else g.rel[e].T
            est[v] = r_uv.T @ est[u]
            done[v] = True
            queue.append(v)
    if not done.all():
        raise DisconnectedGraph("spanning tree does not reach every node")
    return est


def weiszfeld_sra(current, proposals, iters=5, weights=None, eps=WEISZFELD_EPS):
    """Geodesic L1 median of ``proposals`` refined from ``current``.

    Each iteration maps proposals to the tangent space at the estimate,
    takes the Weiszfeld-weighted mean (weights ``w_i / max(d_i, eps)``) and
    maps back. A step that would increase the weighted geodesic cost is
    rejected, which makes the refinement monotone.
    """
    proposals = np.asarray(proposals, dtype=float).reshape(-1, 3, 3)
    if len(proposals) == 0:
        raise ValueError("need at least one proposal")
    w = np.ones(len(proposals)) if weights is None else np.asarray(weights, dtype=float)
    r = np.asarray(current, dtype=float)
    tangent = _tangents(r, proposals)
    dist = np.sqrt(np.sum(tangent * tangent, axis=1))
    cost = float(w @ dist)
    for _ in range(iters):
        coef = w / np.maximum(dist, eps)
        step = (coef[:, None] * tangent).sum(axis=0) / coef.sum()
        candidate = r @ so3.exp_map(step)
        # the candidate's tangents double as the next iteration's
        new_tangent = _tangents(candidate, proposals)
        new_dist = np.sqrt(np.sum(new_tangent * new_tangent, axis=1))
        new_cost = float(w @ new_dist)
        if new_cost > cost:
            break
        r, cost, tangent, dist = candidate, new_cost, new_tangent, new_dist
        if step @ step < 1e-24:
            break
    return r


def _tangents(r, proposals):
    return so3.log_map(r.T @ proposals)


def node_sra_objective(g, est):
    """Sum over nodes of the mean geodesic distance (radians) to neighbor proposals."""
    u, v = g.edge_index[:, 0], g.edge_index[:, 1]
    ang = np.deg2rad(so3.geodesic_deg(est[u], g.rel @ est[v]))
    deg = g.degrees()
    return float(np.sum(ang / deg[u] + ang / deg[v]))


def weiszfeld_mra(g, init, sweeps=20, iters=5, callback=None):
    """Gauss-Seidel sweeps of per-node Weiszfeld averaging.

    Node ``u``'s proposals are ``R_uv R_v`` over its neighbors; nodes are
    visited in ascending id. Each proposal is weighted by
    ``1/|N_u| + 1/|N_v|``, the weight that edge carries in
    :func:`node_sra_objective`, so every node update can only lower it.

    ``callback(sweep, est)`` is called after each sweep if given.
    """
    est = np.array(init, dtype=float, copy=True)
    if est.shape != (g.node_count, 3, 3):
        raise ValueError("init must have shape (N, 3, 3)")
    adj = g.adjacency()
    deg = g.degrees()
    nbr = []
    for u in range(g.node_count):
        vs = np.array([v for v, _, _ in adj[u]], dtype=np.int64)
        rs = np.array([g.rel[e] if fwd else g.rel[e].T for _, e, fwd in adj[u]]).reshape(-1, 3, 3)
        ws = 1.0 / deg[u] + 1.0 / deg[vs]
        nbr.append((vs, rs, ws))
    for sweep in range(sweeps):
        for u in range(g.node_count):
            vs, rs, ws = nbr[u]
            est[u] = weiszfeld_sra(est[u], rs @ est[vs], iters=iters, weights=ws)
        if callback is not None:
            callback(sweep + 1, est)
    return est
