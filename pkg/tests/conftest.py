import numpy as np
import pytest

from rago import so3
from rago.viewgraph import ViewGraph

FIVE_NODE_EDGES = [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)]


def make_graph(n, pairs, sigma=10.0, seed=0, outliers=()):
    """Graph on explicit edges with noisy measurements of Haar ground truth."""
    rng = np.random.default_rng(seed)
    gt = so3.random_rotations(n, rng)
    edges, flags = [], []
    for i, (u, v) in enumerate(pairs):
        r = so3.random_perturbation(sigma, rng) @ gt[u] @ gt[v].T
        if i in outliers:
            r = so3.random_rotation(rng)
        edges.append((u, v, r))
        flags.append(i in outliers)
    return ViewGraph.build(n, edges, gt, flags)


def randomize_heads(weights, rng, scale=0.1):
    """Give the zero-initialized update heads small random values."""
    for k, p in weights.items():
        if "_head.w3" in k and "theta_update" in k:
            p.data = rng.uniform(-scale, scale, p.data.shape)
    return weights


def jitter_biases(weights, rng, scale=0.05):
    """Move zero-initialized biases off zero.

    With zero biases a node whose features are all clipped by a ReLU feeds
    exactly 0 into the next ReLU, where finite differences see a kink.
    """
    for k, p in weights.items():
        if k.rsplit(".", 1)[-1].startswith("b"):
            p.data = p.data + rng.uniform(-scale, scale, p.data.shape)
    return weights


@pytest.fixture
def five_node_graph():
    return make_graph(5, FIVE_NODE_EDGES, seed=1)


_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(item.user_properties).get("detail", "")
        _CRITERIA[marker.args[0]] = (report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        outcome, detail = _CRITERIA[k]
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {k}: {status}" + (f"  ({detail})" if detail else ""))
