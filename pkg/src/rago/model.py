"""Recurrent graph optimizer for multiple rotation averaging.

The optimizer keeps an absolute rotation per node and a rectified relative
rotation per edge. Each update builds the single-rotation-averaging cost
graph from the current state, encodes it with stacked edge convolutions,
and lets a GRU per entity class emit an Orth6D increment that right-multiplies
the current rotation.

Edges are processed in both directions: directed edge ``d < E`` is the
stored ``(u, v)`` with measurement ``R_uv``; ``d + E`` is ``(v, u)`` with
``R_uv^T``. Node aggregation averages over all outgoing directed edges.
Per-edge outputs are read from the stored direction.
"""

import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import so3
from .errors import ConfigError, DegenerateInput, ShapeMismatch
from .evaluation import mn_md_error
from .nn import value as V
from .nn.layers import MLPSpec, ModelWeights, gru_cell, init_gru, init_mlp, mlp_forward

logger = logging.getLogger(__name__)

COST_METRICS = ("l1", "deg", "null", "mra")
MODES = ("alternating", "simultaneous")
UPDATERS = ("gru", "mlp")


@dataclass
class ArchConfig:
    feat_dim: int = 48
    hidden_dim: int = 48
    mlp_dim: int = 48
    n_cost_convs: int = 3
    n_feat_convs: int = 1
    t_g: int = 3
    t_e: int = 1
    t_n: int = 4
    t_g_test: int = 5
    mode: str = "alternating"
    cost_metric: str = "l1"
    updater: str = "gru"
    # feed the node/edge update the neighbor consensus expressed in the
    # entity's own frame, in addition to the cost features
    local_frame_inputs: bool = True

    def validate(self):
        for f in ("feat_dim", "hidden_dim", "mlp_dim", "n_cost_convs", "n_feat_convs",
                  "t_g", "t_e", "t_n", "t_g_test"):
            if int(getattr(self, f)) < 1:
                raise ConfigError(f"{f} must be a positive integer")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.cost_metric not in COST_METRICS:
            raise ConfigError(f"cost_metric must be one of {COST_METRICS}")
        if self.updater not in UPDATERS:
            raise ConfigError(f"updater must be one of {UPDATERS}")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known}).validate()

    def schedule(self, t_g=None):
        """Ordered list of update kinds (``"edge"``, ``"node"`` or ``"joint"``)."""
        t_g = self.t_g if t_g is None else t_g
        if self.mode == "simultaneous":
            return ["joint"] * t_g
        return (["edge"] * self.t_e + ["node"] * self.t_n) * t_g


@dataclass(frozen=True)
class CostGraph:
    node_cost: np.ndarray  # (N,)
    edge_cost: np.ndarray  # (E, 2)


class GraphIndex:
    """Directed-edge index arrays derived from a ViewGraph."""

    def __init__(self, g):
        self.n = g.node_count
        self.e = g.edge_count
        u, v = g.edge_index[:, 0], g.edge_index[:, 1]
        self.u, self.v = u, v
        self.src = np.concatenate([u, v])
        self.dst = np.concatenate([v, u])
        self.rel = g.rel
        self.rel_dir = np.concatenate([g.rel, np.swapaxes(g.rel, -1, -2)])
        self.rel_flat_dir = self.rel_dir.reshape(-1, 9)


def _dir_edges(x, e):
    """Tile stored-direction rows to both directions."""
    return V.concat([x, x], axis=0)


# ---------------------------------------------------------------------------
# parameters


def _conv_specs(node_in, edge_in, width):
    return (MLPSpec((2 * node_in + edge_in, width, width, width)),
            MLPSpec((width, width, width, width)))


def _update_input_dims(cfg):
    extra = 18 if cfg.local_frame_inputs else 0
    node = cfg.mlp_dim + 9 + cfg.feat_dim + extra
    edge = cfg.mlp_dim + 9 + cfg.feat_dim + extra
    return node, edge


def _init_mpnn(weights, prefix, cfg, out_dim, rng):
    m = cfg.mlp_dim
    dn, de = 9, 9
    for k in range(cfg.n_feat_convs):
        se, sn = _conv_specs(dn, de, m)
        init_mlp(weights, f"{prefix}.conv{k + 1}.edge_mlp", se, rng)
        init_mlp(weights, f"{prefix}.conv{k + 1}.node_mlp", sn, rng)
        dn = de = m
    init_mlp(weights, f"{prefix}.node_head", MLPSpec((m, m, m, out_dim)), rng)
    init_mlp(weights, f"{prefix}.edge_head", MLPSpec((m, m, m, out_dim)), rng)


def init_weights(cfg, seed=0):
    """Fresh parameters; the Orth6D update heads start at zero (identity update)."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    w = ModelWeights()
    m, hdim = cfg.mlp_dim, cfg.hidden_dim
    _init_mpnn(w, "theta_feat", cfg, cfg.feat_dim, rng)
    _init_mpnn(w, "theta_state", cfg, hdim, rng)
    init_mlp(w, "theta_cost.node_in", MLPSpec((1, m, m, m)), rng)
    init_mlp(w, "theta_cost.edge_in", MLPSpec((2, m, m, m)), rng)
    for k in range(cfg.n_cost_convs):
        se, sn = _conv_specs(m, m, m)
        init_mlp(w, f"theta_cost.conv{k + 1}.edge_mlp", se, rng)
        init_mlp(w, f"theta_cost.conv{k + 1}.node_mlp", sn, rng)
    n_in, e_in = _update_input_dims(cfg)
    for kind, width in (("node", n_in), ("edge", e_in)):
        if cfg.updater == "gru":
            init_gru(w, f"theta_update.{kind}_gru", hdim, width, rng)
        else:
            init_mlp(w, f"theta_update.{kind}_mlp", _mlp_updater_spec(cfg, width), rng)
        init_mlp(w, f"theta_update.{kind}_head", MLPSpec((hdim, m, m, 6)), rng, zero_last=True)
    return w


def _mlp_updater_spec(cfg, width):
    m = cfg.mlp_dim
    return MLPSpec((width, m, m, m, m, m, cfg.hidden_dim))


def constant_weights(weights):
    """Gradient-free view of ``weights`` for inference."""
    return ModelWeights({k: V.Value(v.data) for k, v in weights.items()})


# ---------------------------------------------------------------------------
# graph networks


def edge_conv(weights, prefix, gi, node_x, edge_x, width):
    """One edge convolution over directed edges.

    ``f'_uv = edge_mlp([f_u, f_v, f_uv])`` and
    ``f'_u = node_mlp(mean_v f'_uv)``.
    """
    dn = node_x.shape[1]
    se, sn = _conv_specs(dn, edge_x.shape[1], width)
    # first edge layer on [f_u, f_v, f_uv] evaluated blockwise: project
    # node features once per node, then gather to edges
    w1 = weights[f"{prefix}.edge_mlp.w1"]
    if w1.shape != (se.sizes[0], se.sizes[1]):
        raise ShapeMismatch(f"{prefix}.edge_mlp.w1 has shape {w1.shape}")
    p_src = V.matmul(node_x, w1[:dn])
    p_dst = V.matmul(node_x, w1[dn : 2 * dn])
    x = V.add(V.add(V.gather(p_src, gi.src), V.gather(p_dst, gi.dst)),
              V.add(V.matmul(edge_x, w1[2 * dn :]), weights[f"{prefix}.edge_mlp.b1"]))
    x = V.relu(x)
    tail = MLPSpec(se.sizes[1:])
    e_new = mlp_forward(weights, f"{prefix}.edge_mlp", x, tail, first_layer=2)
    n_new = mlp_forward(weights, f"{prefix}.node_mlp", V.scatter_mean(e_new, gi.src, gi.n), sn)
    return n_new, e_new


def _run_convs(weights, prefix, gi, node_x, edge_x, n_convs, width):
    for k in range(n_convs):
        node_x, edge_x = edge_conv(weights, f"{prefix}.conv{k + 1}", gi, node_x, edge_x, width)
        if k < n_convs - 1:
            node_x, edge_x = V.relu(node_x), V.relu(edge_x)
    return node_x, edge_x


def _graph_mpnn(weights, prefix, gi, cfg, out_dim):
    node_x = V.Value(np.zeros((gi.n, 9)))
    edge_x = V.Value(gi.rel_flat_dir)
    node_x, edge_x = _run_convs(weights, prefix, gi, node_x, edge_x, cfg.n_feat_convs, cfg.mlp_dim)
    head = MLPSpec((cfg.mlp_dim, cfg.mlp_dim, cfg.mlp_dim, out_dim))
    f_node = mlp_forward(weights, f"{prefix}.node_head", V.relu(node_x), head)
    f_edge = mlp_forward(weights, f"{prefix}.edge_head", V.relu(edge_x[: gi.e]), head)
    return f_node, f_edge


def extract_features(g, weights, cfg, gi=None):
    """Static node and edge features from the observed relative rotations only."""
    gi = gi or GraphIndex(g)
    return _graph_mpnn(weights, "theta_feat", gi, cfg, cfg.feat_dim)


def init_hidden(g, weights, cfg, gi=None):
    """Initial GRU hidden states in (-1, 1)."""
    gi = gi or GraphIndex(g)
    h_node, h_edge = _graph_mpnn(weights, "theta_state", gi, cfg, cfg.hidden_dim)
    return V.tanh(h_node), V.tanh(h_edge)


# ---------------------------------------------------------------------------
# cost graph


def _l1_rows(x):
    return V.sum(V.absolute(x), axis=(1, 2))


def _angle_deg_rows(a, b):
    # 2 asin(|A - B|_F / (2 sqrt 2)), smoothed at zero
    d = V.sub(a, b)
    chord = V.sqrt(V.add(V.sum(V.mul(d, d), axis=(1, 2)), 1e-12))
    s = V.mul(chord, 1.0 / (2.0 * np.sqrt(2.0)))
    return V.mul(_arcsin(s), 2.0 * 180.0 / np.pi)


def _arcsin(x):
    x = V.as_value(x)
    xc = np.clip(x.data, -1.0 + 1e-12, 1.0 - 1e-12)
    slope = 1.0 / np.sqrt(1.0 - xc * xc)
    return V._make(np.arcsin(xc), (x,), lambda g: x._accumulate(g * slope))


def cost_terms(gi, r_abs, r_rect, metric="l1"):
    """Node and edge costs as differentiable values.

    Node: ``d_u = mean_v dist(R_u, R_uv R_v)`` with observed ``R_uv``.
    Edge: ``(dist(R~_uv, R_u R_v^T), dist(R~_uv, R_uv))``.
    ``dist`` is the entrywise L1 norm (``"l1"``) or the angle in degrees
    (``"deg"``). ``"null"`` zeros every cost; ``"mra"`` replaces every node
    cost with the graph-wide mean edge discrepancy.
    """
    dist = _angle_deg_rows if metric == "deg" else (lambda a, b: _l1_rows(V.sub(a, b)))
    rel_dir = V.Value(gi.rel_dir)
    rel = V.Value(gi.rel)
    est_rel = V.matmul(V.gather(r_abs, gi.u), V.swapaxes(V.gather(r_abs, gi.v)))
    if metric == "mra":
        mra = V.mean(dist(rel, est_rel))
        node = V.mul(V.Value(np.ones(gi.n)), mra)
    else:
        prop = V.matmul(rel_dir, V.gather(r_abs, gi.dst))
        node = V.scatter_mean(dist(V.gather(r_abs, gi.src), prop), gi.src, gi.n)
    edge = V.stack([dist(r_rect, est_rel), dist(r_rect, rel)], axis=1)
    if metric == "null":
        node = V.Value(np.zeros(gi.n))
        edge = V.Value(np.zeros((gi.e, 2)))
    return node, edge


def build_cost_graph(g, est_abs, rect_rel, metric="l1", gi=None):
    """Evaluate the node/edge cost graph for a state (plain arrays)."""
    gi = gi or GraphIndex(g)
    node, edge = cost_terms(gi, V.Value(est_abs), V.Value(rect_rel), metric)
    return CostGraph(node.data.copy(), edge.data.copy())


def cost_features(gi, node_cost, edge_cost, weights, cfg):
    """Encode the cost graph with the input lifts and stacked edge convolutions."""
    m = cfg.mlp_dim
    node_x = mlp_forward(weights, "theta_cost.node_in", V.reshape(node_cost, (gi.n, 1)), MLPSpec((1, m, m, m)))
    edge_x = _dir_edges(mlp_forward(weights, "theta_cost.edge_in", edge_cost, MLPSpec((2, m, m, m))), gi.e)
    node_x, edge_x = V.relu(node_x), V.relu(edge_x)
    c_node, c_edge = _run_convs(weights, "theta_cost", gi, node_x, edge_x, cfg.n_cost_convs, m)
    return c_node, c_edge[: gi.e]


# ---------------------------------------------------------------------------
# updates


def orth6d_to_rotation_value(v):
    """Differentiable Gram-Schmidt map ``(K, 6) -> (K, 3, 3)``."""
    a, b = v[:, 0:3], v[:, 3:6]
    na = V.sqrt(V.sum(V.mul(a, a), axis=1, keepdims=True))
    if np.any(na.data <= so3.ORTH6D_EPS):
        raise DegenerateInput("first Orth6D column has (near) zero norm")
    c1 = V.div(a, na)
    u = V.sub(b, V.mul(V.sum(V.mul(c1, b), axis=1, keepdims=True), c1))
    nu = V.sqrt(V.sum(V.mul(u, u), axis=1, keepdims=True))
    if np.any(nu.data <= so3.ORTH6D_EPS):
        raise DegenerateInput("Orth6D columns are (near) parallel")
    c2 = V.div(u, nu)
    c3 = V.cross(c1, c2)
    return V.stack([c1, c2, c3], axis=-1)


@dataclass
class SolverState:
    est_abs: V.Value  # (N, 3, 3)
    rect_rel: V.Value  # (E, 3, 3)
    h_node: V.Value
    h_edge: V.Value
    f_node: V.Value
    f_edge: V.Value
    edge_updates: int = 0
    node_updates: int = 0
    history: list = field(default_factory=list)


def _flat(r):
    return V.reshape(r, (r.shape[0], 9))


def _node_inputs(gi, state, c_node, cfg):
    parts = [c_node, _flat(state.est_abs), state.f_node]
    if cfg.local_frame_inputs:
        r = state.est_abs
        r_t = V.swapaxes(r)
        r_dst = V.gather(r, gi.dst)
        obs = V.scatter_mean(V.matmul(V.Value(gi.rel_dir), r_dst), gi.src, gi.n)
        rect_dir = V.concat([state.rect_rel, V.swapaxes(state.rect_rel)], axis=0)
        rect = V.scatter_mean(V.matmul(rect_dir, r_dst), gi.src, gi.n)
        parts += [_flat(V.matmul(r_t, obs)), _flat(V.matmul(r_t, rect))]
    return V.concat(parts, axis=1)


def _edge_inputs(gi, state, c_edge, cfg):
    parts = [c_edge, _flat(state.rect_rel), state.f_edge]
    if cfg.local_frame_inputs:
        r = state.est_abs
        est_rel = V.matmul(V.gather(r, gi.u), V.swapaxes(V.gather(r, gi.v)))
        rt = V.swapaxes(state.rect_rel)
        parts += [_flat(V.matmul(rt, est_rel)), _flat(V.matmul(rt, V.Value(gi.rel)))]
    return V.concat(parts, axis=1)


def _recurrent(weights, kind, h, x, cfg):
    if cfg.updater == "gru":
        return gru_cell(weights, f"theta_update.{kind}_gru", h, x)
    return V.tanh(mlp_forward(weights, f"theta_update.{kind}_mlp", x, _mlp_updater_spec(cfg, x.shape[1])))


def _delta_rotation(weights, kind, h, cfg):
    m = cfg.mlp_dim
    out = mlp_forward(weights, f"theta_update.{kind}_head", h, MLPSpec((cfg.hidden_dim, m, m, 6)))
    return orth6d_to_rotation_value(V.add(out, so3.IDENTITY_6D))


def update_step(gi, state, weights, cfg, which, costs=None):
    """Apply one node, edge or joint update; returns the new state.

    ``costs`` may pass precomputed ``(c_node, c_edge)`` cost features.
    """
    if costs is None:
        node_cost, edge_cost = cost_terms(gi, state.est_abs, state.rect_rel, cfg.cost_metric)
        costs = cost_features(gi, node_cost, edge_cost, weights, cfg)
    c_node, c_edge = costs
    new = SolverState(**{f.name: getattr(state, f.name) for f in fields(SolverState)})
    if which in ("edge", "joint"):
        x = _edge_inputs(gi, state, c_edge, cfg)
        new.h_edge = _recurrent(weights, "edge", state.h_edge, x, cfg)
        new.rect_rel = V.matmul(state.rect_rel, _delta_rotation(weights, "edge", new.h_edge, cfg))
        new.edge_updates += 1
    if which in ("node", "joint"):
        x = _node_inputs(gi, state, c_node, cfg)
        new.h_node = _recurrent(weights, "node", state.h_node, x, cfg)
        new.est_abs = V.matmul(state.est_abs, _delta_rotation(weights, "node", new.h_node, cfg))
        new.node_updates += 1
    if which not in ("edge", "node", "joint"):
        raise ValueError(f"unknown update kind {which!r}")
    return new


def initial_state(gi, g, weights, cfg, init_abs):
    f_node, f_edge = extract_features(g, weights, cfg, gi)
    h_node, h_edge = init_hidden(g, weights, cfg, gi)
    rect = np.broadcast_to(np.eye(3), (gi.e, 3, 3)).copy()
    return SolverState(V.Value(np.asarray(init_abs, dtype=float)), V.Value(rect), h_node, h_edge, f_node, f_edge)


def unroll(g, weights, cfg, init_abs, t_g=None, gi=None, on_step=None):
    """Run the update schedule; returns the final state and per-update rotations.

    Returns ``(state, node_iterates, edge_iterates)`` where the iterate lists
    hold the value after every node (edge) update, in order.
    """
    gi = gi or GraphIndex(g)
    state = initial_state(gi, g, weights, cfg, init_abs)
    node_its, edge_its = [], []
    for step, kind in enumerate(cfg.schedule(t_g), start=1):
        state = update_step(gi, state, weights, cfg, kind)
        if kind in ("edge", "joint"):
            edge_its.append(state.rect_rel)
        if kind in ("node", "joint"):
            node_its.append(state.est_abs)
        if on_step is not None:
            on_step(step, kind, state)
    return state, node_its, edge_its


# ---------------------------------------------------------------------------
# inference

TRACE_FIELDS = ["iter", "phase", "mean_node_cost", "mn_deg", "md_deg"]


@dataclass
class InferResult:
    est_abs: np.ndarray
    rect_rel: np.ndarray
    trace: list  # rows of dicts keyed by TRACE_FIELDS
    init_abs: np.ndarray

    def error_after_round(self, cfg, round_index):
        """``(mn, md)`` recorded after outer round ``round_index`` (1-based)."""
        per_round = 1 if cfg.mode == "simultaneous" else cfg.t_e + cfg.t_n
        row = self.trace[round_index * per_round]
        return row["mn_deg"], row["md_deg"]


def initial_rotations(g, init="random", seed=0, provided=None, rng=None):
    from .classical import spt_init

    if init == "random":
        rng = rng if rng is not None else np.random.default_rng(seed)
        return so3.random_rotations(g.node_count, rng)
    if init == "spt":
        return spt_init(g, "max-degree-root")
    if init == "random-spt":
        rng = rng if rng is not None else np.random.default_rng(seed)
        return spt_init(g, "random-root", rng)
    if init == "provided":
        if provided is None:
            raise ValueError("init='provided' needs rotations")
        return np.asarray(provided, dtype=float)
    raise ValueError(f"unknown init {init!r}")


def _trace_row(g, gi, step, phase, est, rect):
    node, _ = cost_terms(gi, V.Value(est), V.Value(rect), "l1")
    row = {"iter": step, "phase": phase, "mean_node_cost": float(np.mean(node.data)),
           "mn_deg": float("nan"), "md_deg": float("nan")}
    if g.gt_abs is not None:
        row["mn_deg"], row["md_deg"] = mn_md_error(est, g.gt_abs)
    return row


def infer(g, weights, cfg, init="random", seed=0, provided=None, t_g=None):
    """Optimize a graph's rotations with frozen weights.

    ``t_g`` defaults to ``cfg.t_g_test``. The trace has one row for the
    initial state plus one per update.
    """
    cfg.validate()
    t_g = cfg.t_g_test if t_g is None else t_g
    gi = GraphIndex(g)
    w = constant_weights(weights)
    init_abs = initial_rotations(g, init, seed, provided)
    rect0 = np.broadcast_to(np.eye(3), (gi.e, 3, 3)).copy()
    trace = [_trace_row(g, gi, 0, "init", init_abs, rect0)]

    def record(step, kind, state):
        trace.append(_trace_row(g, gi, step, kind, state.est_abs.data, state.rect_rel.data))

    state, _, _ = unroll(g, w, cfg, init_abs, t_g=t_g, gi=gi, on_step=record)
    return InferResult(state.est_abs.data.copy(), state.rect_rel.data.copy(), trace, init_abs)
