"""Finite-difference gradient checking shared by the test modules."""

import numpy as np

from rago.nn import value as V


def rel_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def numeric_grad(f, arrays, h=1e-5):
    """Central differences of scalar ``f(arrays)`` w.r.t. every array entry."""
    grads = []
    for x in arrays:
        g = np.zeros_like(x)
        it = np.nditer(x, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = x[i]
            x[i] = old + h
            fp = f(arrays)
            x[i] = old - h
            fm = f(arrays)
            x[i] = old
            g[i] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def check_grad(build, arrays, h=1e-5):
    """Largest relative error between backprop and central differences.

    ``build(values)`` maps a list of Values to a scalar Value.
    """
    arrays = [np.array(a, dtype=float) for a in arrays]
    params = [V.parameter(a.copy()) for a in arrays]
    out = build(params)
    out.backward()
    analytic = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]

    def f(xs):
        return float(build([V.Value(x) for x in xs]).data)

    numeric = numeric_grad(f, arrays, h)
    return max(rel_error(a, n) for a, n in zip(analytic, numeric))


def loss_gradient_error(g, arch, weights, init_abs, gamma, seed, n_dirs=6, n_coords=8, h=1e-5):
    """Backprop vs central differences of the unrolled training loss.

    Compares directional derivatives along random unit directions plus a
    random sample of single coordinates; returns the relative error of the
    stacked derivative vector.
    """
    from rago.training import graph_loss

    weights.zero_grad()
    loss = graph_loss(g, weights, arch, init_abs, gamma)
    loss.backward()
    grad = np.concatenate([weights[k].grad.ravel() if weights[k].grad is not None
                           else np.zeros(weights[k].data.size) for k, _ in weights.sorted_items()])
    theta = weights.flat()
    rng = np.random.default_rng(seed)
    dirs = [d / np.linalg.norm(d) for d in rng.standard_normal((n_dirs, theta.size))]
    for i in rng.choice(theta.size, size=n_coords, replace=False):
        e = np.zeros(theta.size)
        e[i] = 1.0
        dirs.append(e)
    analytic, numeric = [], []
    for d in dirs:
        weights.set_flat(theta + h * d)
        fp = float(graph_loss(g, weights, arch, init_abs, gamma).data)
        weights.set_flat(theta - h * d)
        fm = float(graph_loss(g, weights, arch, init_abs, gamma).data)
        numeric.append((fp - fm) / (2 * h))
        analytic.append(float(grad @ d))
    weights.set_flat(theta)
    return rel_error(analytic, numeric)
