"""Supervised training of the graph optimizer on relative ground truth."""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NonFiniteLoss
from .model import ArchConfig, GraphIndex, initial_rotations, init_weights, unroll
from .nn import value as V
from .nn.optim import AdamState, adamw_step, clip_grad_norm, lr_schedule
from .synth import read_manifest
from .viewgraph import is_connected, load

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-3
    gamma: float = 0.8
    edge_dropout: float = 0.2
    seed: int = 0
    weight_decay: float = 0.01
    hold_epochs: int = 100
    lr_decay: float = 0.999
    init: str = "random"
    grad_clip: float | None = 1.0

    def validate(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0.0 <= self.edge_dropout < 1.0:
            raise ConfigError(f"edge_dropout must lie in [0, 1), got {self.edge_dropout}")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.init not in ("random", "spt", "random-spt"):
            raise ConfigError(f"unknown training init {self.init!r}")
        return self


def iteration_weights(gamma, total):
    """Discount ``gamma**(total - i)`` for iterations ``i = 1..total``."""
    return [gamma ** (total - i) for i in range(1, total + 1)]


def sequence_loss(g, node_iterates, edge_iterates, gamma, gi=None):
    """Discounted L1 loss against ground-truth relative rotations.

    Node term: ``sum_i gamma^(T_n - i) mean_e |R_u^i R_v^iT - R̄_uv|_1``.
    Edge term: ``sum_i gamma^(T_e - i) mean_e |R~_uv^i - R̄_uv|_1``.
    Absolute ground truth never enters, so the loss is gauge invariant.
    """
    gi = gi or GraphIndex(g)
    target = V.Value(g.gt_relative())
    total = V.Value(0.0)
    for w, r in zip(iteration_weights(gamma, len(node_iterates)), node_iterates):
        est_rel = V.matmul(V.gather(r, gi.u), V.swapaxes(V.gather(r, gi.v)))
        total = V.add(total, V.mul(V.l1_loss(est_rel, target), w))
    for w, r in zip(iteration_weights(gamma, len(edge_iterates)), edge_iterates):
        total = V.add(total, V.mul(V.l1_loss(r, target), w))
    return total


def graph_loss(g, weights, cfg, init_abs, gamma, t_g=None):
    """Unroll the training schedule on ``g`` and return the loss value."""
    gi = GraphIndex(g)
    _, node_its, edge_its = unroll(g, weights, cfg, init_abs, t_g=t_g, gi=gi)
    return sequence_loss(g, node_its, edge_its, gamma, gi)


def drop_edges(g, fraction, rng):
    """Random connected subgraph keeping ``1 - fraction`` of the edges.

    When the sample disconnects the graph, the dropped edges of a random
    spanning tree are put back.
    """
    if fraction <= 0 or g.edge_count == 0:
        return g
    n_drop = int(round(fraction * g.edge_count))
    keep = np.ones(g.edge_count, dtype=bool)
    keep[rng.choice(g.edge_count, size=n_drop, replace=False)] = False
    sub = g.subgraph(keep)
    if is_connected(sub):
        return sub
    keep |= _random_tree_mask(g, rng)
    return g.subgraph(keep)


def _random_tree_mask(g, rng):
    adj = g.adjacency()
    root = int(rng.integers(g.node_count))
    mask = np.zeros(g.edge_count, dtype=bool)
    seen = np.zeros(g.node_count, dtype=bool)
    seen[root] = True
    frontier = [root]
    while frontier:
        nxt = []
        for u in frontier:
            for i in rng.permutation(len(adj[u])):
                v, e, _ = adj[u][i]
                if not seen[v]:
                    seen[v] = True
                    mask[e] = True
                    nxt.append(v)
        frontier = nxt
    return mask


def load_dataset(manifest):
    graphs = []
    for row in read_manifest(manifest):
        g = load(row["path"])
        if g.gt_abs is None:
            raise ConfigError(f"{row['path']} has no ground-truth rotations")
        graphs.append(g)
    if not graphs:
        raise ConfigError("manifest lists no graphs")
    return graphs


def train(data, arch=None, tcfg=None, weights=None, on_epoch=None):
    """Train on a manifest path or a list of graphs.

    Returns ``(weights, curve)`` where ``curve`` is a list of
    ``(epoch, mean_loss, lr)``. One AdamW step is taken per graph.
    """
    arch = (arch or ArchConfig()).validate()
    tcfg = (tcfg or TrainConfig()).validate()
    graphs = load_dataset(data) if not isinstance(data, (list, tuple)) else list(data)
    rng = np.random.default_rng(tcfg.seed)
    if weights is None:
        weights = init_weights(arch, seed=int(rng.integers(2**31)))
    state = AdamState()
    curve = []
    for epoch in range(1, tcfg.epochs + 1):
        lr = lr_schedule(epoch, tcfg.lr, tcfg.hold_epochs, tcfg.lr_decay)
        losses = []
        for gidx in rng.permutation(len(graphs)):
            g = drop_edges(graphs[gidx], tcfg.edge_dropout, rng)
            init_abs = initial_rotations(g, tcfg.init, rng=rng)
            weights.zero_grad()
            loss = graph_loss(g, weights, arch, init_abs, tcfg.gamma)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NonFiniteLoss(
                    f"non-finite loss {value} at epoch {epoch}, graph {gidx} "
                    f"(N={g.node_count}, E={g.edge_count}, lr={lr:.3g})"
                )
            loss.backward()
            grads = weights.grads()
            if tcfg.grad_clip is not None:
                clip_grad_norm(grads, tcfg.grad_clip)
            adamw_step(weights, grads, state, lr, weight_decay=tcfg.weight_decay)
            losses.append(value)
        mean_loss = float(np.mean(losses))
        curve.append((epoch, mean_loss, lr))
        logger.info("epoch %d loss %.6f lr %.3g", epoch, mean_loss, lr)
        if on_epoch is not None:
            on_epoch(epoch, mean_loss, lr, weights)
    return weights, curve

