"""Synthetic view-graph generator.

Recipe: node count and ground truth, Erdős–Rényi edges (plus a random
spanning tree for connectivity), Gaussian angular noise with one sigma per
graph, and a fraction of edges replaced by Haar-random outliers.
"""

import csv
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import networkx as nx
import numpy as np

from . import so3
from .errors import ConfigError
from .viewgraph import ViewGraph, save

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.csv"
MANIFEST_FIELDS = ["file", "n_nodes", "n_edges", "sigma_deg", "outlier_frac", "seed"]


@dataclass
class SynthConfig:
    n_nodes_range: tuple = (250, 1000)
    edge_fraction_range: tuple = (0.1, 0.3)
    sigma_deg_range: tuple = (5.0, 30.0)
    outlier_fraction_range: tuple = (0.0, 0.3)
    planar_gt: bool = True
    seed: int = 0

    def validate(self):
        lo, hi = self.n_nodes_range
        if not (int(lo) == lo and int(hi) == hi and 2 <= lo <= hi):
            raise ConfigError("n_nodes_range must be integers with 2 <= lo <= hi")
        for name in ("edge_fraction_range", "outlier_fraction_range"):
            a, b = getattr(self, name)
            if not 0.0 <= a <= b <= 1.0:
                raise ConfigError(f"{name} must satisfy 0 <= lo <= hi <= 1")
        a, b = self.sigma_deg_range
        if not 0.0 <= a <= b:
            raise ConfigError("sigma_deg_range must satisfy 0 <= lo <= hi")
        # fraction * N(N-1)/2 >= N-1  <=>  fraction * N >= 2
        if self.edge_fraction_range[0] * lo < 2.0:
            raise ConfigError(
                f"edge fraction {self.edge_fraction_range[0]} cannot yield a connected "
                f"graph with {lo} nodes (need fraction * N >= 2)"
            )
        return self


# Parameter sets used in the experiments.
FULL_SCALE_TRAINING = SynthConfig((250, 1000), (0.1, 0.3), (5.0, 30.0), (0.0, 0.3))
ROBUSTNESS_DEFAULT = SynthConfig((600, 600), (0.3, 0.3), (15.0, 15.0), (0.15, 0.15))


def _random_pairs(n, m, rng):
    """``m`` distinct unordered pairs drawn uniformly from the complete graph."""
    iu, iv = np.triu_indices(n, k=1)
    flat = rng.choice(len(iu), size=m, replace=False)
    return set(zip(iu[flat].tolist(), iv[flat].tolist()))


def _random_tree_pairs(n, rng):
    """Edges of a uniform random labeled spanning tree (Prüfer decoding)."""
    if n == 2:
        return {(0, 1)}
    seq = rng.integers(0, n, size=n - 2).tolist()
    tree = nx.from_prufer_sequence(seq)
    return {(min(a, b), max(a, b)) for a, b in tree.edges()}


def generate(cfg):
    """Generate one connected view-graph with ground truth and outlier flags."""
    return generate_with_info(cfg)[0]


def generate_with_info(cfg):
    """Like :func:`generate` but also return the sampled noise sigma (degrees)
    and the realized outlier fraction."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n = int(rng.integers(cfg.n_nodes_range[0], cfg.n_nodes_range[1] + 1))
    if cfg.planar_gt:
        gt = np.array([so3.rot_z(a) for a in rng.uniform(0.0, 360.0, size=n)])
    else:
        gt = so3.random_rotations(n, rng)

    fraction = rng.uniform(*cfg.edge_fraction_range)
    target = int(round(fraction * n * (n - 1) / 2))
    pairs = _random_pairs(n, target, rng) | _random_tree_pairs(n, rng)
    pairs = sorted(pairs)

    sigma = float(rng.uniform(*cfg.sigma_deg_range))
    rel = []
    for u, v in pairs:
        noise = so3.random_perturbation(sigma, rng)
        rel.append(noise @ gt[u] @ gt[v].T)
    rel = np.array(rel)

    o = float(rng.uniform(*cfg.outlier_fraction_range))
    n_out = int(round(o * len(pairs)))
    flags = np.zeros(len(pairs), dtype=bool)
    if n_out:
        idx = rng.choice(len(pairs), size=n_out, replace=False)
        flags[idx] = True
        rel[idx] = so3.random_rotations(n_out, rng)

    g = ViewGraph.build(n, [(u, v, r) for (u, v), r in zip(pairs, rel)], gt, flags)
    return g, sigma, n_out / len(pairs)


def graph_seed(seed, index):
    return int(seed) ^ int(index)


def make_dataset(cfg, count, out_dir, prefix="graph"):
    """Write ``count`` graphs plus ``manifest.csv`` to ``out_dir``.

    Graph ``i`` is generated with seed ``cfg.seed XOR i``.
    """
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(count):
        seed = graph_seed(cfg.seed, i)
        sub = SynthConfig(**{**asdict(cfg), "seed": seed})
        g, sigma, o = generate_with_info(sub)
        name = f"{prefix}_{i:04d}.txt"
        save(g, out_dir / name)
        rows.append(
            {
                "file": name,
                "n_nodes": g.node_count,
                "n_edges": g.edge_count,
                "sigma_deg": format(sigma, ".17g"),
                "outlier_frac": format(o, ".17g"),
                "seed": seed,
            }
        )
        logger.debug("wrote %s (N=%d, E=%d)", name, g.node_count, g.edge_count)
    manifest = out_dir / MANIFEST_NAME
    with open(manifest, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return manifest


def read_manifest(path):
    """Rows of a manifest with ``file`` resolved relative to the manifest."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["path"] = path.parent / row["file"]
        row["n_nodes"] = int(row["n_nodes"])
        row["n_edges"] = int(row["n_edges"])
        row["sigma_deg"] = float(row["sigma_deg"])
        row["outlier_frac"] = float(row["outlier_frac"])
        row["seed"] = int(row["seed"])
    return rows
